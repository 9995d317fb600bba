#include "peel/layers.hpp"

#include "peel/error.hpp"
#include "peel/log.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

namespace peel {

double IsoSurface::area() const
{
    double a = 0.0;
    for (const auto& t : triangles) a += triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    return a;
}

std::vector<double> LayerSet::iso_values() const
{
    std::vector<double> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(l.iso_value);
    return out;
}

namespace {

std::uint64_t edge_key(std::int32_t a, std::int32_t b)
{
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

IsoSurface march(const TetMesh& mesh, const ScalarField& g, double c, const std::function<bool(std::int32_t)>* keep)
{
    const double range = g.maxCoeff() - g.minCoeff();
    // Symbolic perturbation: a vertex sitting exactly on the level counts as above it.
    ScalarField gp = g;
    for (Eigen::Index i = 0; i < gp.size(); ++i)
        if (gp[i] == c) gp[i] += 1e-9 * range;

    IsoSurface s;
    s.iso_value = c;
    std::unordered_map<std::uint64_t, std::int32_t> welded;
    const auto vertex_on = [&](std::int32_t a, std::int32_t b) {
        const auto key = edge_key(a, b);
        if (auto it = welded.find(key); it != welded.end()) return it->second;
        const double t = (c - gp[a]) / (gp[b] - gp[a]);
        const auto id = static_cast<std::int32_t>(s.vertices.size());
        s.vertices.push_back(mesh.vertex(a) + t * (mesh.vertex(b) - mesh.vertex(a)));
        s.vertex_edges.push_back({std::min(a, b), std::max(a, b)});
        welded.emplace(key, id);
        return id;
    };
    const auto emit = [&](std::int32_t p, std::int32_t q, std::int32_t r, const Vec3& grad, std::int32_t tet) {
        const Vec3 n = (s.vertices[q] - s.vertices[p]).cross(s.vertices[r] - s.vertices[p]);
        if (n.dot(grad) < 0.0) std::swap(q, r);
        s.triangles.push_back({p, q, r});
        s.source_tets.push_back(tet);
    };

    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
        const auto ti = static_cast<std::int32_t>(t);
        if (keep && !(*keep)(ti)) continue;
        const auto& tet = mesh.tet(t);
        std::array<std::int32_t, 4> above{}, below{};
        int na = 0, nb = 0;
        for (int k = 0; k < 4; ++k) {
            if (gp[tet[k]] > c) above[na++] = tet[k];
            else below[nb++] = tet[k];
        }
        if (na == 0 || nb == 0) continue;
        const auto grads = hat_gradients(mesh, t);
        Vec3 grad = Vec3::Zero();
        for (int k = 0; k < 4; ++k) grad += gp[tet[k]] * grads.row(k).transpose();
        if (na == 1 || nb == 1) {
            const std::int32_t apex = na == 1 ? above[0] : below[0];
            const auto& others = na == 1 ? below : above;
            emit(vertex_on(apex, others[0]), vertex_on(apex, others[1]), vertex_on(apex, others[2]), grad, ti);
        } else {
            // Quad around the two above/below pairs, split along one diagonal.
            const std::int32_t p0 = vertex_on(above[0], below[0]);
            const std::int32_t p1 = vertex_on(above[0], below[1]);
            const std::int32_t p2 = vertex_on(above[1], below[1]);
            const std::int32_t p3 = vertex_on(above[1], below[0]);
            emit(p0, p1, p2, grad, ti);
            emit(p0, p2, p3, grad, ti);
        }
    }
    return s;
}

/// Area-uniform samples on a triangle soup.
std::vector<std::pair<Vec3, std::int32_t>> sample_surface(
    const std::vector<Vec3>& vertices, const std::vector<Tri>& triangles, std::size_t count, std::mt19937_64& rng)
{
    std::vector<double> cumulative(triangles.size());
    double total = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) {
        const auto& tri = triangles[t];
        total += triangle_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
        cumulative[t] = total;
    }
    std::vector<std::pair<Vec3, std::int32_t>> out;
    if (triangles.empty() || !(total > 0.0)) return out;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double pick = u(rng) * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
        if (it == cumulative.end()) --it;
        const auto t = static_cast<std::size_t>(it - cumulative.begin());
        const double r1 = std::sqrt(u(rng));
        const double r2 = u(rng);
        const auto& tri = triangles[t];
        const Vec3 p = (1.0 - r1) * vertices[tri[0]] + r1 * (1.0 - r2) * vertices[tri[1]] + r1 * r2 * vertices[tri[2]];
        out.emplace_back(p, static_cast<std::int32_t>(t));
    }
    return out;
}

} // namespace

IsoSurface extract_isosurface(const TetMesh& mesh, const ScalarField& g, double c)
{
    if (static_cast<std::size_t>(g.size()) != mesh.num_vertices())
        throw Error(ErrorCode::InvalidArgument, "scalar field size does not match vertex count");
    if (!(g.minCoeff() < c && c < g.maxCoeff()))
        throw Error(ErrorCode::IsoValueOutOfRange, "iso-value " + std::to_string(c) + " outside the open range of g");
    return march(mesh, g, c, nullptr);
}

IsoSurface extract_isosurface(
    const TetMesh& mesh, const ScalarField& g, double c, const std::function<bool(std::int32_t)>& keep)
{
    if (static_cast<std::size_t>(g.size()) != mesh.num_vertices())
        throw Error(ErrorCode::InvalidArgument, "scalar field size does not match vertex count");
    return march(mesh, g, c, &keep);
}

std::vector<double> layer_iso_values(const ScalarField& g, const LayerSpacing& spacing)
{
    if (spacing.target_depth.has_value() == spacing.layer_count.has_value())
        throw Error(ErrorCode::InvalidArgument, "give exactly one of target depth and layer count");
    if (g.size() == 0) throw Error(ErrorCode::ConstantField, "empty scalar field");
    const double lo = g.minCoeff();
    const double hi = g.maxCoeff();
    const double range = hi - lo;
    if (!(range > 0.0)) throw Error(ErrorCode::ConstantField, "scalar field is constant");

    std::size_t count = 0;
    if (spacing.target_depth) {
        if (!(*spacing.target_depth > 0.0)) throw Error(ErrorCode::InvalidArgument, "target depth must be positive");
        // ceil(range / depth) gaps between the first and the last station.
        count = static_cast<std::size_t>(std::ceil(range / *spacing.target_depth)) + 1;
    } else {
        if (*spacing.layer_count < 1) throw Error(ErrorCode::InvalidArgument, "layer count must be at least 1");
        count = static_cast<std::size_t>(*spacing.layer_count);
    }
    const double delta = 1e-3 * range;
    const double first = lo + delta;
    const double last = hi - delta;
    if (count == 1) return {0.5 * (lo + hi)};
    std::vector<double> values(count);
    for (std::size_t k = 0; k < count; ++k)
        values[k] = first + (last - first) * static_cast<double>(k) / static_cast<double>(count - 1);
    values.back() = last;
    return values;
}

SpacingStats spacing_stats(const std::vector<IsoSurface>& layers, std::uint64_t seed, int samples_per_layer)
{
    SpacingStats st;
    std::vector<double> d;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        if (layers[i].triangles.empty() || layers[i + 1].triangles.empty()) continue;
        const TriangleTree next(layers[i + 1].surface());
        const auto& vs = layers[i].vertices;
        std::mt19937_64 rng(seed + i);
        for (const auto& [p, tri] :
            sample_surface(vs, layers[i].triangles, static_cast<std::size_t>(samples_per_layer), rng)) {
            // Layers are oriented along +grad g, so the next one lies on the
            // normal side; a miss means the stock clipped it away above p.
            const auto& t = layers[i].triangles[static_cast<std::size_t>(tri)];
            const Vec3 n = (vs[t[1]] - vs[t[0]]).cross(vs[t[2]] - vs[t[0]]).normalized();
            if (!next.raycast(p, n)) {
                ++st.unmatched;
                continue;
            }
            d.push_back(next.closest(p).distance);
        }
    }
    st.samples = d.size();
    if (d.empty()) return st;
    st.mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    double var = 0.0;
    for (double x : d) var += (x - st.mean) * (x - st.mean);
    st.stddev = std::sqrt(var / static_cast<double>(d.size()));
    const auto [mn, mx] = std::minmax_element(d.begin(), d.end());
    st.min = *mn;
    st.max = *mx;
    return st;
}

LayerSet generate_layer_set(const TetMesh& mesh, const ScalarField& g, const LayerSpacing& spacing,
    std::uint64_t seed, int samples_per_layer)
{
    LayerSet set;
    for (double c : layer_iso_values(g, spacing)) set.layers.push_back(extract_isosurface(mesh, g, c));
    set.spacing = spacing_stats(set.layers, seed, samples_per_layer);
    return set;
}

std::vector<FloatingViolation> floating_volume_check(
    const TetMesh& mesh, const ScalarField& g, const std::vector<double>& iso_values, RemainingSide side)
{
    const std::size_t n = mesh.num_tets();
    std::vector<std::uint8_t> on_part(n, 0);
    for (const auto& bf : mesh.boundary_faces())
        if (bf.tag == BoundaryTag::Part) on_part[bf.tet] = 1;
    // Extreme vertex value per tet decides membership.
    std::vector<double> key(n);
    for (std::size_t t = 0; t < n; ++t) {
        const auto& tet = mesh.tet(t);
        double v = g[tet[0]];
        for (int k = 1; k < 4; ++k)
            v = side == RemainingSide::Above ? std::min(v, g[tet[k]]) : std::max(v, g[tet[k]]);
        key[t] = v;
    }

    std::vector<FloatingViolation> out;
    std::vector<std::int32_t> label(n);
    std::vector<std::int32_t> stack;
    for (double c : iso_values) {
        std::fill(label.begin(), label.end(), -1);
        const auto inside = [&](std::size_t t) { return side == RemainingSide::Above ? key[t] >= c : key[t] <= c; };
        for (std::size_t seed = 0; seed < n; ++seed) {
            if (label[seed] >= 0 || !inside(seed)) continue;
            std::vector<std::int32_t> comp;
            bool attached = false;
            label[seed] = 1;
            stack.assign(1, static_cast<std::int32_t>(seed));
            while (!stack.empty()) {
                const auto t = stack.back();
                stack.pop_back();
                comp.push_back(t);
                attached = attached || on_part[t];
                for (auto nb : mesh.neighbors(t)) {
                    if (nb < 0 || label[nb] >= 0 || !inside(static_cast<std::size_t>(nb))) continue;
                    label[nb] = 1;
                    stack.push_back(nb);
                }
            }
            if (attached) continue;
            FloatingViolation v;
            v.iso_value = c;
            std::sort(comp.begin(), comp.end());
            for (auto t : comp) v.volume += mesh.volume(t);
            v.tets = std::move(comp);
            out.push_back(std::move(v));
        }
    }
    return out;
}

RemainingSide part_side(const TetMesh& mesh, const ScalarField& g)
{
    const auto part = tagged_vertices(mesh, BoundaryTag::Part);
    if (part.empty()) return RemainingSide::Above;
    std::vector<std::uint8_t> is_part(mesh.num_vertices(), 0);
    for (auto v : part) is_part[v] = 1;
    double part_sum = 0.0, other_sum = 0.0;
    std::size_t other = 0;
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        if (is_part[v]) {
            part_sum += g[v];
        } else if (mesh.is_boundary_vertex(v)) {
            other_sum += g[v];
            ++other;
        }
    }
    if (other == 0) return RemainingSide::Above;
    return part_sum / static_cast<double>(part.size()) < other_sum / static_cast<double>(other) ? RemainingSide::Below
                                                                                                : RemainingSide::Above;
}

DepthVariationReport depth_variation(const TriangleMesh& final_layer, const TriangleMesh& part,
    std::size_t sample_count, std::uint64_t seed, int bins)
{
    if (final_layer.empty() || part.empty()) throw Error(ErrorCode::EmptyMesh, "depth variation needs two non-empty surfaces");
    if (bins < 1 || sample_count == 0) throw Error(ErrorCode::InvalidArgument, "bins and sample count must be positive");
    const TriangleTree tree(final_layer);
    std::mt19937_64 rng(seed);
    const auto samples = sample_surface(part.vertices, part.triangles, sample_count, rng);

    DepthVariationReport r;
    std::vector<double> depth;
    depth.reserve(samples.size());
    for (const auto& [p, tri] : samples) {
        const Vec3 n = part.normal(static_cast<std::size_t>(tri));
        if (auto hit = tree.raycast(p, n)) {
            depth.push_back(hit->distance);
        } else {
            depth.push_back(tree.closest(p).distance);
            ++r.fallback_samples;
        }
    }
    r.samples = depth.size();
    if (depth.empty()) return r;
    r.max_depth = *std::max_element(depth.begin(), depth.end());
    r.mean_depth = std::accumulate(depth.begin(), depth.end(), 0.0) / static_cast<double>(depth.size());
    r.histogram.assign(static_cast<std::size_t>(bins), 0);
    r.bin_width = r.max_depth / bins;
    for (double d : depth) {
        auto b = r.bin_width > 0.0 ? static_cast<std::size_t>(d / r.bin_width) : 0;
        r.histogram[std::min<std::size_t>(b, static_cast<std::size_t>(bins) - 1)] += 1;
    }

    // Height bands stand in for contours of the part; samples inside a band
    // are walked in angular order around the part centroid.
    constexpr int kBands = 16;
    Aabb box;
    Vec3 center = Vec3::Zero();
    for (const auto& [p, tri] : samples) {
        box.extend(p);
        center += p;
    }
    center /= static_cast<double>(samples.size());
    const double height = box.hi[2] - box.lo[2];
    std::vector<std::vector<std::pair<double, double>>> bands(kBands);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Vec3& p = samples[i].first;
        int b = height > 0.0 ? static_cast<int>((p[2] - box.lo[2]) / height * kBands) : 0;
        b = std::clamp(b, 0, kBands - 1);
        bands[b].emplace_back(std::atan2(p[1] - center[1], p[0] - center[0]), depth[i]);
    }
    double total = 0.0;
    std::size_t steps = 0;
    for (auto& band : bands) {
        std::sort(band.begin(), band.end());
        for (std::size_t k = 1; k < band.size(); ++k) {
            total += std::abs(band[k].second - band[k - 1].second);
            ++steps;
        }
    }
    r.avg_variation = steps > 0 ? total / static_cast<double>(steps) : 0.0;
    return r;
}

std::vector<std::filesystem::path> export_layers(const LayerSet& layers, const std::filesystem::path& dir,
    LayerFormat format, const std::vector<FloatingViolation>& violations)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
    if (layers.layers.empty()) log::warn("exporting an empty layer set");

    std::vector<std::filesystem::path> files;
    nlohmann::json manifest;
    manifest["format"] = format == LayerFormat::Obj ? "obj" : "stl";
    manifest["layers"] = nlohmann::json::array();
    for (std::size_t i = 0; i < layers.layers.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "layer_%03zu.%s", i, format == LayerFormat::Obj ? "obj" : "stl");
        const auto path = dir / name;
        const auto& layer = layers.layers[i];
        if (format == LayerFormat::Obj) save_obj(layer.surface(), path);
        else save_stl(layer.surface(), path);
        files.push_back(path);
        std::size_t bad = 0;
        for (const auto& v : violations)
            if (v.iso_value == layer.iso_value) ++bad;
        manifest["layers"].push_back({{"index", i}, {"file", name}, {"iso_value", layer.iso_value},
            {"triangles", layer.triangles.size()}, {"floating_violations", bad}});
    }
    const auto& s = layers.spacing;
    manifest["spacing"] = {{"mean", s.mean}, {"std", s.stddev}, {"min", s.min}, {"max", s.max}, {"samples", s.samples}};
    manifest["floating_violations"] = violations.size();

    const auto mpath = dir / "manifest.json";
    std::ofstream out(mpath);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + mpath.string());
    out << manifest.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + mpath.string());
    files.push_back(mpath);
    return files;
}

LayerTopology audit_layer(const TetMesh& mesh, const IsoSurface& layer)
{
    std::set<std::array<std::int32_t, 3>> boundary;
    for (const auto& bf : mesh.boundary_faces()) {
        auto f = mesh.face(bf.tet, bf.local_face);
        std::sort(f.begin(), f.end());
        boundary.insert(f);
    }
    std::map<std::pair<std::int32_t, std::int32_t>, int> count;
    for (const auto& t : layer.triangles)
        for (int k = 0; k < 3; ++k) {
            auto a = t[k], b = t[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            count[{a, b}] += 1;
        }
    LayerTopology topo;
    for (const auto& [e, c] : count) {
        if (c > 2) ++topo.non_manifold_edges;
        if (c != 1) continue;
        // An open edge is fine only inside a boundary face of the tet mesh.
        const auto& ea = layer.vertex_edges[e.first];
        const auto& eb = layer.vertex_edges[e.second];
        std::array<std::int32_t, 4> ids{ea[0], ea[1], eb[0], eb[1]};
        std::sort(ids.begin(), ids.end());
        const auto end = std::unique(ids.begin(), ids.end());
        if (end - ids.begin() != 3 || !boundary.count({ids[0], ids[1], ids[2]})) ++topo.interior_open_edges;
    }
    return topo;
}

} // namespace peel
