#include "peel/fieldopt.hpp"

#include "peel/error.hpp"
#include "peel/log.hpp"
#include "spd_solver.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <charconv>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace peel {

void AnchorSet::insert(const Anchor& a)
{
    if (a.tet < 0) throw Error(ErrorCode::InvalidArgument, "anchor tet index is negative");
    if (!(a.weight > 0.0)) throw Error(ErrorCode::InvalidArgument, "anchor weight must be positive");
    const double n = a.direction.norm();
    if (!(n > 0.0) || !a.direction.allFinite()) throw Error(ErrorCode::InvalidArgument, "anchor direction is zero");
    Anchor stored = a;
    stored.direction /= n;
    anchors_[a.tet] = stored;
}

const Anchor* AnchorSet::find(std::int32_t tet) const
{
    auto it = anchors_.find(tet);
    return it == anchors_.end() ? nullptr : &it->second;
}

AnchorSet AnchorSet::critical_only() const
{
    AnchorSet out;
    for (const auto& [t, a] : anchors_)
        if (a.critical) out.anchors_.emplace(t, a);
    return out;
}

std::size_t AnchorSet::critical_count() const
{
    std::size_t n = 0;
    for (const auto& [t, a] : anchors_) n += a.critical ? 1 : 0;
    return n;
}

void FieldOptConfig::validate() const
{
    if (!(alpha > 0.0 && beta_general > 0.0 && beta_critical > 0.0 && gamma > 0.0))
        throw Error(ErrorCode::InvalidArgument, "field weights must be positive");
    if (!(beta_critical >= beta_general && beta_general >= alpha))
        throw Error(ErrorCode::InvalidArgument, "field weights must satisfy beta_critical >= beta_general >= alpha");
}

std::string_view to_string(AnchorTarget t)
{
    switch (t) {
    case AnchorTarget::Tet: return "tet";
    case AnchorTarget::Vertex: return "vertex";
    case AnchorTarget::Face: return "face";
    }
    return "tet";
}

std::optional<AnchorTarget> parse_anchor_target(std::string_view s)
{
    if (s == "tet") return AnchorTarget::Tet;
    if (s == "vertex") return AnchorTarget::Vertex;
    if (s == "face") return AnchorTarget::Face;
    return std::nullopt;
}

std::vector<std::int32_t> anchor_tets(const TetMesh& mesh, const AnchorSpec& spec)
{
    auto bad = [&](std::size_t limit) {
        if (spec.id < 0 || static_cast<std::size_t>(spec.id) >= limit)
            throw Error(ErrorCode::InvalidArgument,
                std::string(to_string(spec.target)) + " id " + std::to_string(spec.id) + " out of range");
    };
    switch (spec.target) {
    case AnchorTarget::Tet:
        bad(mesh.num_tets());
        return {static_cast<std::int32_t>(spec.id)};
    case AnchorTarget::Vertex: {
        bad(mesh.num_vertices());
        const auto span = mesh.vertex_tets(static_cast<std::size_t>(spec.id));
        return {span.begin(), span.end()};
    }
    case AnchorTarget::Face:
        bad(mesh.boundary_faces().size());
        return {mesh.boundary_faces()[static_cast<std::size_t>(spec.id)].tet};
    }
    return {};
}

void add_anchor(AnchorSet& set, const TetMesh& mesh, const AnchorSpec& spec, const FieldOptConfig& cfg)
{
    const double w = spec.weight.value_or(spec.critical ? cfg.beta_critical : cfg.beta_general);
    for (auto t : anchor_tets(mesh, spec)) set.insert({t, spec.direction, w, spec.critical});
}

std::vector<AnchorSpec> parse_anchor_specs(std::string_view text)
{
    std::vector<AnchorSpec> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string kind;
        if (!(ls >> kind)) continue;
        auto fail = [&](const std::string& msg) {
            throw Error(ErrorCode::ParseError, "anchors:" + std::to_string(line_no) + ": " + msg);
        };
        AnchorSpec spec;
        const auto target = parse_anchor_target(kind);
        if (!target) fail("unknown anchor target '" + kind + "'");
        spec.target = *target;
        if (!(ls >> spec.id >> spec.direction[0] >> spec.direction[1] >> spec.direction[2]))
            fail("expected 'kind id dx dy dz [weight] [critical]'");
        std::string tok;
        while (ls >> tok) {
            if (tok == "critical") {
                spec.critical = true;
            } else if (tok == "-") {
                spec.weight.reset();
            } else {
                double w = 0.0;
                auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), w);
                if (ec != std::errc() || p != tok.data() + tok.size() || !(w > 0.0)) fail("bad weight '" + tok + "'");
                spec.weight = w;
            }
        }
        if (!(spec.direction.norm() > 0.0)) fail("zero direction");
        out.push_back(spec);
    }
    return out;
}

std::string format_anchor_specs(const std::vector<AnchorSpec>& specs)
{
    std::ostringstream out;
    out.precision(17);
    for (const auto& s : specs) {
        out << to_string(s.target) << ' ' << s.id << ' ' << s.direction[0] << ' ' << s.direction[1] << ' '
            << s.direction[2] << ' ';
        if (s.weight)
            out << *s.weight;
        else
            out << '-';
        if (s.critical) out << " critical";
        out << '\n';
    }
    return out.str();
}

SparseMatrix uniform_laplacian(const TetMesh& mesh)
{
    const auto n = static_cast<Eigen::Index>(mesh.num_tets());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(5 * mesh.num_tets());
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
        int count = 0;
        for (auto nb : mesh.neighbors(t)) count += nb >= 0 ? 1 : 0;
        if (count == 0) continue;
        const auto row = static_cast<Eigen::Index>(t);
        trips.emplace_back(row, row, 1.0);
        for (auto nb : mesh.neighbors(t))
            if (nb >= 0) trips.emplace_back(row, nb, -1.0 / count);
    }
    SparseMatrix lu(n, n);
    lu.setFromTriplets(trips.begin(), trips.end());
    return lu;
}

FieldSystem::FieldSystem(const SparseMatrix& lu_t_lu, double alpha, const Eigen::VectorXd& weights)
    : w2_(weights.array().square())
{
    a_ = (alpha * alpha) * lu_t_lu;
    for (Eigen::Index i = 0; i < w2_.size(); ++i)
        if (w2_[i] != 0.0) a_.coeffRef(i, i) += w2_[i];
    a_.makeCompressed();

    // Off-diagonal mass of each row against its diagonal.
    double worst = 0.0;
    for (Eigen::Index c = 0; c < a_.outerSize(); ++c) {
        double off = 0.0;
        double diag = 0.0;
        for (SparseMatrix::InnerIterator it(a_, c); it; ++it) {
            if (it.row() == it.col())
                diag = it.value();
            else
                off += std::abs(it.value());
        }
        worst = std::max(worst, diag > 0.0 ? off / diag : std::numeric_limits<double>::infinity());
    }
    if (worst < 1e-2) return;
    factor_ = std::make_unique<detail::SpdFactor>();
    if (!factor_->compute(a_)) throw Error(ErrorCode::SolverFailure, "factorization of the field system failed");
}

FieldSystem::~FieldSystem() = default;

VectorField FieldSystem::solve(const VectorField& targets) const
{
    const Eigen::Index n = w2_.size();
    VectorField out(static_cast<std::size_t>(n));
    std::unique_ptr<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>> cg;
    if (!factor_) {
        cg = std::make_unique<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>>();
        cg->setTolerance(1e-14);
        cg->setMaxIterations(1000);
        cg->compute(a_);
    }
    for (int c = 0; c < 3; ++c) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (w2_[i] != 0.0) b[i] = w2_[i] * targets[static_cast<std::size_t>(i)][c];
        Eigen::VectorXd x;
        if (factor_) {
            x = factor_->solve(b);
        } else {
            x = cg->solve(b);
            if (cg->info() != Eigen::Success) throw Error(ErrorCode::SolverFailure, "field CG did not converge");
        }
        if (!x.allFinite()) throw Error(ErrorCode::SolverFailure, "field solve produced non-finite values");
        for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)][c] = x[i];
    }
    return out;
}

namespace {

/// Face-connected components of the tets; returns the component id per tet.
std::vector<std::int32_t> tet_components(const TetMesh& mesh, std::int32_t* count)
{
    std::vector<std::int32_t> comp(mesh.num_tets(), -1);
    std::int32_t next = 0;
    std::vector<std::int32_t> stack;
    for (std::size_t s = 0; s < mesh.num_tets(); ++s) {
        if (comp[s] >= 0) continue;
        comp[s] = next;
        stack.push_back(static_cast<std::int32_t>(s));
        while (!stack.empty()) {
            const auto t = stack.back();
            stack.pop_back();
            for (auto nb : mesh.neighbors(t)) {
                if (nb >= 0 && comp[nb] < 0) {
                    comp[nb] = next;
                    stack.push_back(nb);
                }
            }
        }
        ++next;
    }
    *count = next;
    return comp;
}

} // namespace

VectorField solve_field_raw(const TetMesh& mesh, const AnchorSet& anchors, const FieldOptConfig& cfg)
{
    cfg.validate();
    if (anchors.empty()) throw Error(ErrorCode::EmptyAnchorSet, "at least one anchor is required");
    std::int32_t ncomp = 0;
    const auto comp = tet_components(mesh, &ncomp);
    std::vector<std::uint8_t> anchored(static_cast<std::size_t>(ncomp), 0);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_tets()));
    VectorField targets(mesh.num_tets(), Vec3::Zero());
    for (const auto& [t, a] : anchors) {
        if (static_cast<std::size_t>(t) >= mesh.num_tets())
            throw Error(ErrorCode::InvalidArgument, "anchor tet " + std::to_string(t) + " out of range");
        w[t] = a.weight;
        targets[t] = a.direction;
        anchored[comp[t]] = 1;
    }
    for (std::int32_t c = 0; c < ncomp; ++c)
        if (!anchored[c])
            throw Error(ErrorCode::SolverFailure, "mesh component " + std::to_string(c) + " has no anchor");
    const SparseMatrix lu = uniform_laplacian(mesh);
    const SparseMatrix ltl = SparseMatrix(lu.transpose()) * lu;
    return FieldSystem(ltl, cfg.alpha, w).solve(targets);
}

VectorField interpolate_field(const TetMesh& mesh, const AnchorSet& anchors, const FieldOptConfig& cfg)
{
    return normalized(solve_field_raw(mesh, anchors, cfg));
}

double anchor_residual(const VectorField& field, const AnchorSet& anchors)
{
    double r = 0.0;
    for (const auto& [t, a] : anchors) r = std::max(r, (field.at(static_cast<std::size_t>(t)) - a.direction).norm());
    return r;
}

std::vector<std::pair<std::int32_t, Vec3>> part_normal_ring(const TetMesh& mesh, int ring_depth)
{
    std::vector<Vec3> normal(mesh.num_tets(), Vec3::Zero());
    std::vector<int> depth(mesh.num_tets(), -1);
    std::deque<std::int32_t> queue;
    for (const auto& bf : mesh.boundary_faces()) {
        if (bf.tag != BoundaryTag::Part) continue;
        // face_area_vector points out of the domain, i.e. into the part.
        normal[bf.tet] -= face_area_vector(mesh, bf.tet, bf.local_face).normalized();
        if (depth[bf.tet] < 0) {
            depth[bf.tet] = 1;
            queue.push_back(bf.tet);
        }
    }
    if (queue.empty()) throw Error(ErrorCode::NoPartFaces, "mesh has no PART-tagged boundary faces");
    std::sort(queue.begin(), queue.end());
    for (auto t : queue) normal[t].normalize();
    while (!queue.empty()) {
        const auto t = queue.front();
        queue.pop_front();
        if (depth[t] >= ring_depth) continue;
        for (auto nb : mesh.neighbors(t)) {
            if (nb < 0 || depth[nb] >= 0) continue;
            depth[nb] = depth[t] + 1;
            normal[nb] = normal[t];
            queue.push_back(nb);
        }
    }
    std::vector<std::pair<std::int32_t, Vec3>> out;
    for (std::size_t t = 0; t < mesh.num_tets(); ++t)
        if (depth[t] > 0) out.emplace_back(static_cast<std::int32_t>(t), normal[t]);
    return out;
}

VectorField blend_with_normals(const VectorField& field, const TetMesh& mesh, double alpha_blend, int ring_depth)
{
    if (!(alpha_blend >= 0.0 && alpha_blend <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "blend alpha must lie in [0, 1]");
    if (field.size() != mesh.num_tets())
        throw Error(ErrorCode::InvalidArgument, "vector field size does not match tet count");
    VectorField out = field;
    for (const auto& [t, n] : part_normal_ring(mesh, ring_depth)) {
        if (alpha_blend == 1.0) continue;
        const Vec3 mix = alpha_blend * field[t] + (1.0 - alpha_blend) * n;
        const double len = mix.norm();
        if (len < 1e-12) {
            log::warn("blend cancels in tet " + std::to_string(t) + "; keeping the field vector");
            continue;
        }
        out[t] = mix / len;
    }
    return out;
}

} // namespace peel
