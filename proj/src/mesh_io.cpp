#include "peel/error.hpp"
#include "peel/log.hpp"
#include "peel/tetmesh.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace peel {

namespace {

/// Whitespace tokenizer over a whole file; '#' starts a comment.
class Tokens {
public:
    explicit Tokens(const fs::path& path) : path_(path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
        std::string line;
        while (std::getline(in, line)) {
            ++line_no_;
            if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
            std::size_t i = 0;
            while (i < line.size()) {
                while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
                std::size_t j = i;
                while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
                if (j > i) {
                    tokens_.push_back(line.substr(i, j - i));
                    lines_.push_back(line_no_);
                }
                i = j;
            }
        }
    }

    bool done() const { return pos_ >= tokens_.size(); }

    const std::string& next()
    {
        if (done()) fail("unexpected end of file");
        return tokens_[pos_++];
    }

    long long next_int()
    {
        const auto& tok = next();
        long long v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size()) fail("expected integer, got '" + tok + "'");
        return v;
    }

    double next_double()
    {
        const auto& tok = next();
        double v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size()) fail("expected number, got '" + tok + "'");
        return v;
    }

    [[noreturn]] void fail(const std::string& msg) const
    {
        const std::size_t line = pos_ == 0 ? 0 : lines_[std::min(pos_, lines_.size()) - 1];
        throw Error(ErrorCode::ParseError, path_.string() + ":" + std::to_string(line) + ": " + msg);
    }

    /// Remaining tokens on the line of the token just consumed.
    std::size_t rest_of_line() const
    {
        if (pos_ == 0) return 0;
        const std::size_t line = lines_[pos_ - 1];
        std::size_t n = 0;
        while (pos_ + n < tokens_.size() && lines_[pos_ + n] == line) ++n;
        return n;
    }

    void skip(std::size_t n) { pos_ += n; }

private:
    fs::path path_;
    std::vector<std::string> tokens_;
    std::vector<std::size_t> lines_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
};

std::string format_double(double v)
{
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

fs::path tetgen_stem(const fs::path& path)
{
    const auto ext = path.extension().string();
    if (ext == ".node" || ext == ".ele" || ext == ".tags") {
        fs::path stem = path;
        stem.replace_extension();
        return stem;
    }
    return path;
}

fs::path with_suffix(const fs::path& stem, const std::string& suffix)
{
    return fs::path(stem.string() + suffix);
}

TetMesh load_tetgen(const fs::path& path)
{
    const fs::path stem = tetgen_stem(path);
    Tokens node(with_suffix(stem, ".node"));
    const auto nv = node.next_int();
    const auto dim = node.next_int();
    const auto nattr = node.next_int();
    const auto nmark = node.next_int();
    if (nv < 0 || dim != 3 || nattr < 0 || nmark < 0 || nmark > 1) node.fail("bad .node header");
    std::vector<Vec3> vertices(static_cast<std::size_t>(nv));
    long long base = 0;
    for (long long i = 0; i < nv; ++i) {
        const long long id = node.next_int();
        if (i == 0) {
            if (id != 0 && id != 1) node.fail("first vertex id must be 0 or 1");
            base = id;
        }
        if (id - base != i) node.fail("vertex ids must be consecutive");
        for (int k = 0; k < 3; ++k) vertices[i][k] = node.next_double();
        node.skip(static_cast<std::size_t>(nattr + nmark));
    }

    Tokens ele(with_suffix(stem, ".ele"));
    const auto nt = ele.next_int();
    const auto per = ele.next_int();
    const auto eattr = ele.next_int();
    if (nt < 0 || per != 4 || eattr < 0) ele.fail("bad .ele header (only linear tets are supported)");
    std::vector<Tet> tets(static_cast<std::size_t>(nt));
    for (long long i = 0; i < nt; ++i) {
        ele.next_int();
        for (int k = 0; k < 4; ++k) {
            const long long v = ele.next_int() - base;
            if (v < 0 || v >= nv) ele.fail("vertex index out of range");
            tets[i][k] = static_cast<std::int32_t>(v);
        }
        ele.skip(static_cast<std::size_t>(eattr));
    }
    return TetMesh(std::move(vertices), std::move(tets));
}

TetMesh load_vtk(const fs::path& path)
{
    Tokens tok(path);
    // Header: "vtk DataFile Version x.y" sits in a comment line; the title is free text.
    std::vector<Vec3> vertices;
    std::vector<Tet> tets;
    std::vector<std::vector<std::int32_t>> cells;
    bool ascii = false;
    while (!tok.done()) {
        const std::string key = tok.next();
        if (key == "ASCII") {
            ascii = true;
        } else if (key == "BINARY") {
            tok.fail("binary VTK is not supported");
        } else if (key == "DATASET") {
            if (tok.next() != "UNSTRUCTURED_GRID") tok.fail("expected UNSTRUCTURED_GRID");
        } else if (key == "POINTS") {
            const auto n = tok.next_int();
            tok.next();
            vertices.resize(static_cast<std::size_t>(n));
            for (auto& v : vertices)
                for (int k = 0; k < 3; ++k) v[k] = tok.next_double();
        } else if (key == "CELLS") {
            const auto n = tok.next_int();
            tok.next_int();
            cells.resize(static_cast<std::size_t>(n));
            for (auto& c : cells) {
                const auto m = tok.next_int();
                if (m < 0) tok.fail("negative cell size");
                c.resize(static_cast<std::size_t>(m));
                for (auto& v : c) v = static_cast<std::int32_t>(tok.next_int());
            }
        } else if (key == "CELL_TYPES") {
            const auto n = tok.next_int();
            if (static_cast<std::size_t>(n) != cells.size()) tok.fail("CELL_TYPES count mismatch");
            std::size_t skipped = 0;
            for (long long i = 0; i < n; ++i) {
                const auto type = tok.next_int();
                if (type != 10) {
                    ++skipped;
                    continue;
                }
                const auto& c = cells[i];
                if (c.size() != 4) tok.fail("tetra cell with " + std::to_string(c.size()) + " nodes");
                for (auto v : c)
                    if (v < 0 || static_cast<std::size_t>(v) >= vertices.size())
                        tok.fail("vertex index out of range");
                tets.push_back({c[0], c[1], c[2], c[3]});
            }
            if (skipped > 0) log::warn(std::to_string(skipped) + " non-tetra cells ignored in " + path.string());
        } else if (key == "CELL_DATA" || key == "POINT_DATA") {
            break;
        }
    }
    if (!ascii) tok.fail("missing ASCII keyword");
    if (tets.empty()) tok.fail("no tetrahedra");
    return TetMesh(std::move(vertices), std::move(tets));
}

void write_or_throw(std::ofstream& out, const fs::path& path)
{
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

} // namespace

std::optional<MeshFormat> guess_format(const fs::path& path)
{
    const auto ext = path.extension().string();
    if (ext == ".vtk") return MeshFormat::VtkLegacy;
    if (ext == ".node" || ext == ".ele") return MeshFormat::TetgenNodeEle;
    if (fs::exists(with_suffix(path, ".node"))) return MeshFormat::TetgenNodeEle;
    return std::nullopt;
}

TetMesh load_mesh(const fs::path& path, MeshFormat format, const std::optional<fs::path>& tags)
{
    TetMesh mesh = format == MeshFormat::TetgenNodeEle ? load_tetgen(path) : load_vtk(path);
    fs::path stem = format == MeshFormat::TetgenNodeEle ? tetgen_stem(path) : fs::path(path).replace_extension();
    if (tags) {
        load_boundary_tags(mesh, *tags);
    } else if (auto side = with_suffix(stem, ".tags"); fs::exists(side)) {
        load_boundary_tags(mesh, side);
    }
    return mesh;
}

void save_mesh(const TetMesh& mesh, const fs::path& path, MeshFormat format)
{
    fs::path stem;
    if (format == MeshFormat::TetgenNodeEle) {
        stem = tetgen_stem(path);
        {
            const auto p = with_suffix(stem, ".node");
            std::ofstream out(p);
            if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
            out << mesh.num_vertices() << " 3 0 0\n";
            for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
                const auto& v = mesh.vertex(i);
                out << i << ' ' << format_double(v[0]) << ' ' << format_double(v[1]) << ' '
                    << format_double(v[2]) << '\n';
            }
            write_or_throw(out, p);
        }
        {
            const auto p = with_suffix(stem, ".ele");
            std::ofstream out(p);
            if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
            out << mesh.num_tets() << " 4 0\n";
            for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
                const auto& tet = mesh.tet(t);
                out << t << ' ' << tet[0] << ' ' << tet[1] << ' ' << tet[2] << ' ' << tet[3] << '\n';
            }
            write_or_throw(out, p);
        }
    } else {
        stem = fs::path(path).replace_extension();
        std::ofstream out(path);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
        out << "# vtk DataFile Version 3.0\npeel tetrahedral mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
        out << "POINTS " << mesh.num_vertices() << " double\n";
        for (const auto& v : mesh.vertices())
            out << format_double(v[0]) << ' ' << format_double(v[1]) << ' ' << format_double(v[2]) << '\n';
        out << "CELLS " << mesh.num_tets() << ' ' << 5 * mesh.num_tets() << '\n';
        for (const auto& tet : mesh.tets())
            out << "4 " << tet[0] << ' ' << tet[1] << ' ' << tet[2] << ' ' << tet[3] << '\n';
        out << "CELL_TYPES " << mesh.num_tets() << '\n';
        for (std::size_t t = 0; t < mesh.num_tets(); ++t) out << "10\n";
        write_or_throw(out, path);
    }
    const bool tagged = std::any_of(mesh.boundary_faces().begin(), mesh.boundary_faces().end(),
        [](const BoundaryFace& f) { return f.tag != BoundaryTag::Untagged; });
    if (tagged) save_boundary_tags(mesh, with_suffix(stem, ".tags"));
}

void load_boundary_tags(TetMesh& mesh, const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        long long t = 0;
        int f = 0;
        std::string tag;
        if (!(ls >> t)) continue;
        auto fail = [&](const std::string& msg) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + msg);
        };
        if (!(ls >> f >> tag)) fail("expected 'tet_index local_face PART|STOCK'");
        const auto parsed = parse_boundary_tag(tag);
        if (!parsed) fail("unknown tag '" + tag + "'");
        if (t < 0 || static_cast<std::size_t>(t) >= mesh.num_tets() || f < 0 || f > 3)
            fail("face reference out of range");
        const auto id = mesh.boundary_face_id(static_cast<std::size_t>(t), f);
        if (id < 0) fail("face is not on the boundary");
        mesh.set_tag(static_cast<std::size_t>(id), *parsed);
    }
}

void save_boundary_tags(const TetMesh& mesh, const fs::path& path)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    for (const auto& bf : mesh.boundary_faces()) {
        if (bf.tag == BoundaryTag::Untagged) continue;
        out << bf.tet << ' ' << bf.local_face << ' ' << to_string(bf.tag) << '\n';
    }
    write_or_throw(out, path);
}

void tag_boundary_by_surface(TetMesh& mesh, const TriangleMesh& part_surface, double eps)
{
    if (eps <= 0.0) eps = 1e-4 * mesh.bounds().diagonal();
    const TriangleTree tree(part_surface);
    for (std::size_t i = 0; i < mesh.boundary_faces().size(); ++i) {
        const auto& bf = mesh.boundary_faces()[i];
        const auto f = mesh.face(bf.tet, bf.local_face);
        bool near = !tree.empty();
        Vec3 c = Vec3::Zero();
        for (auto v : f) {
            c += mesh.vertex(v) / 3.0;
            if (near && tree.closest(mesh.vertex(v)).distance > eps) near = false;
        }
        if (near && tree.closest(c).distance > eps) near = false;
        mesh.set_tag(i, near ? BoundaryTag::Part : BoundaryTag::Stock);
    }
}

void tag_boundary(TetMesh& mesh, const std::function<BoundaryTag(std::size_t, int)>& classify)
{
    for (std::size_t i = 0; i < mesh.boundary_faces().size(); ++i) {
        const auto& bf = mesh.boundary_faces()[i];
        mesh.set_tag(i, classify(static_cast<std::size_t>(bf.tet), bf.local_face));
    }
}

// ---------------------------------------------------------------------------
// Triangle surfaces

void save_obj(const TriangleMesh& mesh, const fs::path& path)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    for (const auto& v : mesh.vertices)
        out << "v " << format_double(v[0]) << ' ' << format_double(v[1]) << ' ' << format_double(v[2]) << '\n';
    for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    write_or_throw(out, path);
}

void save_stl(const TriangleMesh& mesh, const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    char header[80] = {};
    std::strncpy(header, "peel layer", sizeof(header) - 1);
    out.write(header, sizeof(header));
    const auto n = static_cast<std::uint32_t>(mesh.triangles.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        float rec[12];
        const Vec3 nrm = mesh.normal(t);
        for (int k = 0; k < 3; ++k) rec[k] = static_cast<float>(nrm[k]);
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < 3; ++k)
                rec[3 + 3 * c + k] = static_cast<float>(mesh.vertices[mesh.triangles[t][c]][k]);
        out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
        const std::uint16_t attr = 0;
        out.write(reinterpret_cast<const char*>(&attr), sizeof(attr));
    }
    write_or_throw(out, path);
}

namespace {

/// Welds exactly coincident corners so STL input becomes indexed.
struct Welder {
    TriangleMesh mesh;
    std::map<std::array<double, 3>, std::int32_t> index;

    std::int32_t add(const Vec3& p)
    {
        const std::array<double, 3> key{p[0], p[1], p[2]};
        auto [it, inserted] = index.emplace(key, static_cast<std::int32_t>(mesh.vertices.size()));
        if (inserted) mesh.vertices.push_back(p);
        return it->second;
    }
};

} // namespace

TriangleMesh load_stl(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Welder weld;
    if (data.size() >= 84) {
        std::uint32_t n = 0;
        std::memcpy(&n, data.data() + 80, sizeof(n));
        if (data.size() == 84 + static_cast<std::size_t>(n) * 50) {
            for (std::uint32_t t = 0; t < n; ++t) {
                float rec[12];
                std::memcpy(rec, data.data() + 84 + t * 50, sizeof(rec));
                Tri tri{};
                for (int c = 0; c < 3; ++c)
                    tri[c] = weld.add(Vec3(rec[3 + 3 * c], rec[4 + 3 * c], rec[5 + 3 * c]));
                weld.mesh.triangles.push_back(tri);
            }
            return weld.mesh;
        }
    }
    std::istringstream ss(data);
    std::string word;
    std::vector<Vec3> corners;
    while (ss >> word) {
        if (word == "vertex") {
            Vec3 p;
            if (!(ss >> p[0] >> p[1] >> p[2])) throw Error(ErrorCode::ParseError, "bad STL vertex in " + path.string());
            corners.push_back(p);
            if (corners.size() == 3) {
                weld.mesh.triangles.push_back({weld.add(corners[0]), weld.add(corners[1]), weld.add(corners[2])});
                corners.clear();
            }
        }
    }
    if (weld.mesh.triangles.empty()) throw Error(ErrorCode::ParseError, "no triangles in " + path.string());
    return weld.mesh;
}

TriangleMesh load_obj(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    TriangleMesh mesh;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "v") {
            Vec3 p;
            if (!(ls >> p[0] >> p[1] >> p[2]))
                throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": bad vertex");
            mesh.vertices.push_back(p);
        } else if (key == "f") {
            std::vector<std::int32_t> poly;
            std::string item;
            while (ls >> item) {
                const long idx = std::stol(item.substr(0, item.find('/')));
                const long v = idx > 0 ? idx - 1 : static_cast<long>(mesh.vertices.size()) + idx;
                if (v < 0 || static_cast<std::size_t>(v) >= mesh.vertices.size())
                    throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": bad index");
                poly.push_back(static_cast<std::int32_t>(v));
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
        }
    }
    return mesh;
}

TriangleMesh load_surface(const fs::path& path)
{
    const auto ext = path.extension().string();
    if (ext == ".stl" || ext == ".STL") return load_stl(path);
    if (ext == ".obj" || ext == ".OBJ") return load_obj(path);
    throw Error(ErrorCode::ParseError, "unsupported surface format: " + path.string());
}

} // namespace peel
