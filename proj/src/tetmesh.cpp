#include "peel/tetmesh.hpp"

#include "peel/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace peel {

std::string_view to_string(BoundaryTag tag)
{
    switch (tag) {
    case BoundaryTag::Part: return "PART";
    case BoundaryTag::Stock: return "STOCK";
    case BoundaryTag::Untagged: break;
    }
    return "UNTAGGED";
}

std::optional<BoundaryTag> parse_boundary_tag(std::string_view s)
{
    if (s == "PART") return BoundaryTag::Part;
    if (s == "STOCK") return BoundaryTag::Stock;
    if (s == "UNTAGGED") return BoundaryTag::Untagged;
    return std::nullopt;
}

namespace {

double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d)
{
    return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

struct FaceKey {
    std::array<std::int32_t, 3> v;
    std::int32_t tet;
    std::int32_t local;
};

} // namespace

TetMesh::TetMesh(std::vector<Vec3> vertices, std::vector<Tet> tets)
    : vertices_(std::move(vertices)), tets_(std::move(tets))
{
    const auto nv = static_cast<std::int64_t>(vertices_.size());
    const std::size_t nt = tets_.size();

    volumes_.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        auto& tet = tets_[t];
        for (auto v : tet) {
            if (v < 0 || v >= nv) {
                throw Error(ErrorCode::InvalidArgument,
                    "tet " + std::to_string(t) + " references vertex " + std::to_string(v)
                        + " out of range");
            }
        }
        double vol = signed_volume(
            vertices_[tet[0]], vertices_[tet[1]], vertices_[tet[2]], vertices_[tet[3]]);
        if (std::abs(vol) < kDegenerateVolume) {
            std::ostringstream msg;
            msg << "tet " << t << " has volume " << vol;
            throw Error(ErrorCode::DegenerateTet, msg.str());
        }
        if (vol < 0.0) {
            std::swap(tet[2], tet[3]);
            vol = -vol;
        }
        volumes_[t] = vol;
    }

    // Face matching by sorted vertex triple.
    std::vector<FaceKey> keys;
    keys.reserve(4 * nt);
    for (std::size_t t = 0; t < nt; ++t) {
        for (int f = 0; f < 4; ++f) {
            std::array<std::int32_t, 3> v{tets_[t][kTetFaces[f][0]], tets_[t][kTetFaces[f][1]],
                tets_[t][kTetFaces[f][2]]};
            std::sort(v.begin(), v.end());
            keys.push_back({v, static_cast<std::int32_t>(t), f});
        }
    }
    std::sort(keys.begin(), keys.end(), [](const FaceKey& a, const FaceKey& b) {
        if (a.v != b.v) return a.v < b.v;
        if (a.tet != b.tet) return a.tet < b.tet;
        return a.local < b.local;
    });

    neighbors_.assign(nt, {-1, -1, -1, -1});
    boundary_id_.assign(nt, {-1, -1, -1, -1});
    std::size_t i = 0;
    while (i < keys.size()) {
        std::size_t j = i + 1;
        while (j < keys.size() && keys[j].v == keys[i].v) ++j;
        const std::size_t count = j - i;
        if (count > 2) {
            std::ostringstream msg;
            msg << "face (" << keys[i].v[0] << "," << keys[i].v[1] << "," << keys[i].v[2]
                << ") shared by " << count << " tets";
            throw Error(ErrorCode::NonManifoldFace, msg.str());
        }
        if (count == 2) {
            const auto& a = keys[i];
            const auto& b = keys[i + 1];
            if (a.tet == b.tet) {
                throw Error(ErrorCode::DegenerateTet,
                    "tet " + std::to_string(a.tet) + " has two identical faces");
            }
            neighbors_[a.tet][a.local] = b.tet;
            neighbors_[b.tet][b.local] = a.tet;
        }
        i = j;
    }
    for (std::size_t t = 0; t < nt; ++t) {
        for (int f = 0; f < 4; ++f) {
            if (neighbors_[t][f] < 0) {
                boundary_id_[t][f] = static_cast<std::int32_t>(boundary_.size());
                boundary_.push_back({static_cast<std::int32_t>(t), f, BoundaryTag::Untagged});
            }
        }
    }

    // Vertex -> tet incidence (CSR).
    vt_ptr_.assign(nv + 1, 0);
    for (const auto& tet : tets_)
        for (auto v : tet) ++vt_ptr_[v + 1];
    std::partial_sum(vt_ptr_.begin(), vt_ptr_.end(), vt_ptr_.begin());
    vt_idx_.resize(vt_ptr_.back());
    {
        std::vector<std::int32_t> fill(vt_ptr_.begin(), vt_ptr_.end() - 1);
        for (std::size_t t = 0; t < nt; ++t)
            for (auto v : tets_[t]) vt_idx_[fill[v]++] = static_cast<std::int32_t>(t);
    }

    // 1-ring via edges of incident tets.
    vv_ptr_.assign(nv + 1, 0);
    std::vector<std::vector<std::int32_t>> rings(nv);
    for (const auto& tet : tets_) {
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                if (a != b) rings[tet[a]].push_back(tet[b]);
    }
    for (std::int64_t v = 0; v < nv; ++v) {
        auto& r = rings[v];
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
        vv_ptr_[v + 1] = vv_ptr_[v] + static_cast<std::int32_t>(r.size());
    }
    vv_idx_.reserve(vv_ptr_.back());
    for (auto& r : rings) vv_idx_.insert(vv_idx_.end(), r.begin(), r.end());

    boundary_vertex_.assign(nv, 0);
    for (const auto& bf : boundary_) {
        for (auto v : face(bf.tet, bf.local_face)) boundary_vertex_[v] = 1;
    }
}

std::array<std::int32_t, 3> TetMesh::face(std::size_t t, int f) const
{
    const auto& tet = tets_[t];
    return {tet[kTetFaces[f][0]], tet[kTetFaces[f][1]], tet[kTetFaces[f][2]]};
}

bool TetMesh::has_tag(BoundaryTag tag) const
{
    return std::any_of(
        boundary_.begin(), boundary_.end(), [tag](const BoundaryFace& f) { return f.tag == tag; });
}

double TetMesh::total_volume() const
{
    return std::accumulate(volumes_.begin(), volumes_.end(), 0.0);
}

Vec3 TetMesh::centroid(std::size_t t) const
{
    const auto& tet = tets_[t];
    return 0.25 * (vertices_[tet[0]] + vertices_[tet[1]] + vertices_[tet[2]] + vertices_[tet[3]]);
}

Aabb TetMesh::bounds() const
{
    Aabb box;
    for (const auto& v : vertices_) box.extend(v);
    return box;
}

TriangleMesh TetMesh::boundary_surface(std::optional<BoundaryTag> tag) const
{
    TriangleMesh out;
    std::vector<std::int32_t> remap(vertices_.size(), -1);
    for (const auto& bf : boundary_) {
        if (tag && bf.tag != *tag) continue;
        Tri tri{};
        const auto f = face(bf.tet, bf.local_face);
        for (int k = 0; k < 3; ++k) {
            auto& r = remap[f[k]];
            if (r < 0) {
                r = static_cast<std::int32_t>(out.vertices.size());
                out.vertices.push_back(vertices_[f[k]]);
            }
            tri[k] = r;
        }
        out.triangles.push_back(tri);
    }
    return out;
}

double tet_volume(const TetMesh& mesh, std::size_t t)
{
    const auto& tet = mesh.tet(t);
    const Vec3& l = mesh.vertex(tet[3]);
    Eigen::Matrix3d m;
    m.row(0) = (mesh.vertex(tet[0]) - l).transpose();
    m.row(1) = (mesh.vertex(tet[1]) - l).transpose();
    m.row(2) = (mesh.vertex(tet[2]) - l).transpose();
    return std::abs(m.determinant()) / 6.0;
}

Vec3 face_area_vector(const TetMesh& mesh, std::size_t t, int opposite)
{
    const auto f = mesh.face(t, opposite);
    const Vec3& a = mesh.vertex(f[0]);
    const Vec3& b = mesh.vertex(f[1]);
    const Vec3& c = mesh.vertex(f[2]);
    return 0.5 * (b - a).cross(c - a);
}

std::array<double, 4> barycentric(const TetMesh& mesh, std::size_t t, const Vec3& x)
{
    const auto& tet = mesh.tet(t);
    const Vec3& p0 = mesh.vertex(tet[0]);
    Eigen::Matrix3d m;
    m.col(0) = mesh.vertex(tet[1]) - p0;
    m.col(1) = mesh.vertex(tet[2]) - p0;
    m.col(2) = mesh.vertex(tet[3]) - p0;
    const Vec3 l = m.partialPivLu().solve(x - p0);
    return {1.0 - l.sum(), l[0], l[1], l[2]};
}

PointLocator::PointLocator(const TetMesh& mesh) : mesh_(mesh)
{
    box_ = mesh.bounds();
    const std::size_t nt = mesh.num_tets();
    if (nt == 0) return;
    const Vec3 ext = (box_.hi - box_.lo).cwiseMax(Vec3::Constant(1e-12));
    const double target = std::cbrt(static_cast<double>(nt) / ext.prod());
    for (int k = 0; k < 3; ++k) {
        dims_[k] = std::clamp(static_cast<int>(std::ceil(ext[k] * target)), 1, 256);
        cell_[k] = ext[k] / dims_[k];
    }
    cells_.resize(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]);
    auto index = [&](const Vec3& p, int k) {
        return std::clamp(static_cast<int>(std::floor((p[k] - box_.lo[k]) / cell_[k])), 0, dims_[k] - 1);
    };
    for (std::size_t t = 0; t < nt; ++t) {
        Aabb b;
        for (auto v : mesh.tet(t)) b.extend(mesh.vertex(v));
        const double pad = 1e-9 * box_.diagonal();
        b.lo.array() -= pad;
        b.hi.array() += pad;
        for (int i = index(b.lo, 0); i <= index(b.hi, 0); ++i)
            for (int j = index(b.lo, 1); j <= index(b.hi, 1); ++j)
                for (int k = index(b.lo, 2); k <= index(b.hi, 2); ++k)
                    cells_[(static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i].push_back(
                        static_cast<std::int32_t>(t));
    }
}

std::optional<std::int32_t> PointLocator::locate(const Vec3& x) const
{
    if (cells_.empty()) return std::nullopt;
    const double pad = 1e-9 * box_.diagonal();
    for (int k = 0; k < 3; ++k) {
        if (x[k] < box_.lo[k] - pad || x[k] > box_.hi[k] + pad) return std::nullopt;
    }
    int idx[3];
    for (int k = 0; k < 3; ++k) {
        idx[k] = std::clamp(static_cast<int>(std::floor((x[k] - box_.lo[k]) / cell_[k])), 0, dims_[k] - 1);
    }
    const auto& cand = cells_[(static_cast<std::size_t>(idx[2]) * dims_[1] + idx[1]) * dims_[0] + idx[0]];
    // candidate lists are built in increasing tet order
    for (auto t : cand) {
        const auto b = barycentric(mesh_, t, x);
        if (b[0] >= -1e-9 && b[1] >= -1e-9 && b[2] >= -1e-9 && b[3] >= -1e-9) return t;
    }
    return std::nullopt;
}

std::optional<std::int32_t> locate_point(const TetMesh& mesh, const Vec3& x)
{
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
        const auto b = barycentric(mesh, t, x);
        if (b[0] >= -1e-9 && b[1] >= -1e-9 && b[2] >= -1e-9 && b[3] >= -1e-9)
            return static_cast<std::int32_t>(t);
    }
    return std::nullopt;
}

} // namespace peel
