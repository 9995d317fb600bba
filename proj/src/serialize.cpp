#include "peel/serialize.hpp"

#include "peel/error.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace peel {
namespace {

[[noreturn]] void parse_fail(const std::string& what)
{
    throw Error(ErrorCode::ParseError, what);
}

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) parse_fail(where + " must be an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) parse_fail("unknown key '" + key + "' in " + where);
}

template <class T>
T get_as(const Json& j, const std::string& key)
{
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        parse_fail("bad value for '" + key + "': " + e.what());
    }
}

Vec3 vec_from_json(const Json& j, const std::string& key)
{
    const Json& a = j.at(key);
    if (!a.is_array() || a.size() != 3) parse_fail("'" + key + "' must be an array of 3 numbers");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        if (!a[static_cast<std::size_t>(i)].is_number()) parse_fail("'" + key + "' must be an array of 3 numbers");
        v[i] = a[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
}

Json vec_json(const Vec3& v)
{
    return Json::array({v[0], v[1], v[2]});
}

std::string_view format_name(LayerFormat f)
{
    return f == LayerFormat::Obj ? "obj" : "stl";
}

Json faces_json(const std::vector<FaceRef>& faces)
{
    Json out = Json::array();
    for (const auto& f : faces) out.push_back({f.tet, f.local_face, f.other});
    return out;
}

Json points_json(const std::vector<PointSingularity>& points, const TetMesh& mesh)
{
    Json out = Json::array();
    for (const auto& p : points)
        out.push_back({{"vertex", p.vertex}, {"kind", to_string(p.kind)}, {"interior", p.interior},
            {"position", vec_json(mesh.vertex(static_cast<std::size_t>(p.vertex)))}});
    return out;
}

} // namespace

AnchorSpec anchor_spec_from_json(const Json& j)
{
    reject_unknown(j, {"target", "id", "direction", "weight", "critical"}, "anchor");
    AnchorSpec a;
    if (j.contains("target")) {
        const auto t = parse_anchor_target(get_as<std::string>(j, "target"));
        if (!t) parse_fail("unknown anchor target '" + j["target"].dump() + "'");
        a.target = *t;
    }
    if (!j.contains("id") || !j.contains("direction")) parse_fail("anchor needs 'id' and 'direction'");
    a.id = get_as<std::int64_t>(j, "id");
    a.direction = vec_from_json(j, "direction");
    if (j.contains("weight") && !j["weight"].is_null()) a.weight = get_as<double>(j, "weight");
    if (j.contains("critical")) a.critical = get_as<bool>(j, "critical");
    return a;
}

Json to_json(const AnchorSpec& a)
{
    Json j{{"target", to_string(a.target)}, {"id", a.id}, {"direction", vec_json(a.direction)}, {"critical", a.critical}};
    if (a.weight) j["weight"] = *a.weight;
    return j;
}

ResolutionDirective directive_from_json(const Json& j)
{
    reject_unknown(j, {"action", "vertex", "near", "direction", "ring_depth"}, "directive");
    ResolutionDirective d;
    if (j.contains("action")) {
        const auto a = parse_directive_action(get_as<std::string>(j, "action"));
        if (!a) parse_fail("unknown directive action " + j["action"].dump());
        d.action = *a;
    }
    if (j.contains("vertex")) d.vertex = get_as<std::int32_t>(j, "vertex");
    if (j.contains("near")) d.near = vec_from_json(j, "near");
    if (j.contains("direction")) d.anchor_direction = vec_from_json(j, "direction");
    if (j.contains("ring_depth")) d.ring_depth = get_as<int>(j, "ring_depth");
    try {
        d.validate();
    } catch (const Error& e) {
        parse_fail(e.what());
    }
    return d;
}

Json to_json(const ResolutionDirective& d)
{
    Json j{{"action", to_string(d.action)}};
    if (d.vertex) j["vertex"] = *d.vertex;
    if (d.near) j["near"] = vec_json(*d.near);
    if (d.anchor_direction) j["direction"] = vec_json(*d.anchor_direction);
    if (d.action == DirectiveAction::LocalCorrection) j["ring_depth"] = d.ring_depth;
    return j;
}

PlanConfig plan_config_from_json(const Json& j)
{
    reject_unknown(j,
        {"strategy", "bc", "target_depth", "layer_count", "weights", "blend_alpha", "blend_ring_depth",
            "peel_direction", "anchors", "hull_concavities", "directives", "curl", "max_rounds",
            "conflict_threshold", "seed", "depth_samples", "spacing_samples", "layer_format"},
        "plan config");
    PlanConfig c;
    if (j.contains("strategy")) {
        const auto s = parse_strategy(get_as<std::string>(j, "strategy"));
        if (!s) parse_fail("unknown strategy " + j["strategy"].dump());
        c.strategy = *s;
    }
    if (j.contains("bc")) {
        const auto b = parse_bc_choice(get_as<std::string>(j, "bc"));
        if (!b) parse_fail("unknown bc " + j["bc"].dump());
        c.bc = *b;
    }
    if (j.contains("target_depth") || j.contains("layer_count")) {
        c.spacing = {};
        if (j.contains("target_depth")) c.spacing.target_depth = get_as<double>(j, "target_depth");
        if (j.contains("layer_count")) c.spacing.layer_count = get_as<int>(j, "layer_count");
    }
    if (j.contains("weights")) {
        const Json& w = j["weights"];
        reject_unknown(w, {"alpha", "beta_general", "beta_critical", "gamma"}, "weights");
        if (w.contains("alpha")) c.weights.alpha = get_as<double>(w, "alpha");
        if (w.contains("beta_general")) c.weights.beta_general = get_as<double>(w, "beta_general");
        if (w.contains("beta_critical")) c.weights.beta_critical = get_as<double>(w, "beta_critical");
        if (w.contains("gamma")) c.weights.gamma = get_as<double>(w, "gamma");
    }
    if (j.contains("blend_alpha") && !j["blend_alpha"].is_null()) c.blend_alpha = get_as<double>(j, "blend_alpha");
    if (j.contains("blend_ring_depth")) c.blend_ring_depth = get_as<int>(j, "blend_ring_depth");
    if (j.contains("peel_direction")) c.peel_direction = vec_from_json(j, "peel_direction");
    if (j.contains("anchors")) {
        if (!j["anchors"].is_array()) parse_fail("'anchors' must be an array");
        for (const auto& a : j["anchors"]) c.anchors.push_back(anchor_spec_from_json(a));
    }
    if (j.contains("hull_concavities")) c.hull_concavities = get_as<bool>(j, "hull_concavities");
    if (j.contains("directives")) {
        if (!j["directives"].is_array()) parse_fail("'directives' must be an array");
        for (const auto& d : j["directives"]) c.directives.push_back(directive_from_json(d));
    }
    if (j.contains("curl")) {
        const Json& k = j["curl"];
        reject_unknown(k, {"threshold", "max_iters"}, "curl");
        if (k.contains("threshold")) c.curl_threshold = get_as<double>(k, "threshold");
        if (k.contains("max_iters")) c.curl_max_iters = get_as<int>(k, "max_iters");
    }
    if (j.contains("max_rounds")) c.max_rounds = get_as<int>(j, "max_rounds");
    if (j.contains("conflict_threshold")) c.conflict_threshold = get_as<double>(j, "conflict_threshold");
    if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed");
    if (j.contains("depth_samples")) c.depth_samples = get_as<std::size_t>(j, "depth_samples");
    if (j.contains("spacing_samples")) c.spacing_samples = get_as<int>(j, "spacing_samples");
    if (j.contains("layer_format")) {
        const auto f = get_as<std::string>(j, "layer_format");
        if (f == "obj") c.layer_format = LayerFormat::Obj;
        else if (f == "stl") c.layer_format = LayerFormat::Stl;
        else parse_fail("unknown layer_format '" + f + "'");
    }
    try {
        c.validate();
    } catch (const Error& e) {
        parse_fail(e.what());
    }
    return c;
}

Json to_json(const PlanConfig& c)
{
    Json j{{"strategy", to_string(c.strategy)}, {"bc", to_string(c.bc)},
        {"weights", {{"alpha", c.weights.alpha}, {"beta_general", c.weights.beta_general},
                        {"beta_critical", c.weights.beta_critical}, {"gamma", c.weights.gamma}}},
        {"blend_ring_depth", c.blend_ring_depth}, {"hull_concavities", c.hull_concavities},
        {"curl", {{"threshold", c.curl_threshold}, {"max_iters", c.curl_max_iters}}}, {"max_rounds", c.max_rounds},
        {"conflict_threshold", c.conflict_threshold}, {"seed", c.seed}, {"depth_samples", c.depth_samples},
        {"spacing_samples", c.spacing_samples}, {"layer_format", format_name(c.layer_format)}};
    if (c.spacing.target_depth) j["target_depth"] = *c.spacing.target_depth;
    if (c.spacing.layer_count) j["layer_count"] = *c.spacing.layer_count;
    if (c.blend_alpha) j["blend_alpha"] = *c.blend_alpha;
    if (c.peel_direction) j["peel_direction"] = vec_json(*c.peel_direction);
    j["anchors"] = Json::array();
    for (const auto& a : c.anchors) j["anchors"].push_back(to_json(a));
    j["directives"] = Json::array();
    for (const auto& d : c.directives) j["directives"].push_back(to_json(d));
    return j;
}

PlanConfig load_plan_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        parse_fail(path.string() + ": " + e.what());
    }
    return plan_config_from_json(j);
}

Json to_json(const CurlRemovalReport& r)
{
    return {{"iterations", r.iterations}, {"converged", r.converged}, {"i_rot_history", r.i_rot_history},
        {"zero_gradient_tets", r.zero_gradient_tets}};
}

Json to_json(const SingularityReport& r, const TetMesh& mesh)
{
    Json j{{"rounds", r.rounds}, {"found_points", points_json(r.found_points, mesh)},
        {"remaining_points", points_json(r.remaining_points, mesh)},
        {"boundary_points", points_json(r.boundary_points, mesh)}, {"plateaus", r.plateaus}};
    j["boundaries"] = Json::array();
    for (std::size_t i = 0; i < r.boundaries.size(); ++i) {
        const auto& b = r.boundaries[i];
        Vec3 c = Vec3::Zero();
        for (const auto& f : b.faces) c += mesh.centroid(static_cast<std::size_t>(f.tet));
        if (!b.faces.empty()) c /= static_cast<double>(b.faces.size());
        const bool unresolved
            = std::find(r.unresolved_boundaries.begin(), r.unresolved_boundaries.end(), i) != r.unresolved_boundaries.end();
        j["boundaries"].push_back({{"faces", faces_json(b.faces)}, {"rim", b.rim}, {"admissible", b.admissible},
            {"type", b.admissible ? "III" : "IV"}, {"unresolved", unresolved}, {"centroid", vec_json(c)}});
    }
    j["corrections"] = Json::array();
    for (const auto& c : r.corrections) {
        Json layers = Json::array();
        for (const auto& l : c.replacement_layers)
            layers.push_back({{"iso_value", l.iso_value}, {"triangles", l.triangles.size()}});
        j["corrections"].push_back(
            {{"broken_values", c.broken_values}, {"ring_depth", c.ring_depth_used}, {"replacement_layers", layers}});
    }
    j["unresolved_boundaries"] = r.unresolved_boundaries;
    j["notes"] = r.notes;
    return j;
}

Json to_json(const SpacingStats& s)
{
    return {{"mean", s.mean}, {"std", s.stddev}, {"min", s.min}, {"max", s.max}, {"samples", s.samples}, {"unmatched", s.unmatched}};
}

Json to_json(const DepthVariationReport& d)
{
    return {{"max_depth", d.max_depth}, {"mean_depth", d.mean_depth}, {"avg_variation", d.avg_variation},
        {"samples", d.samples}, {"fallback_samples", d.fallback_samples}, {"bin_width", d.bin_width},
        {"histogram", d.histogram}};
}

Json to_json(const PlanMetrics& m)
{
    Json j{{"i_rot", m.i_rot}, {"interior_extrema", m.interior_extrema},
        {"unresolved_boundaries", m.unresolved_boundaries}, {"floating_violations", m.floating_violations},
        {"spacing", to_json(m.spacing)}};
    j["depth"] = m.depth ? to_json(*m.depth) : Json(nullptr);
    return j;
}

Json to_json(const ComparisonReport& c)
{
    Json rows = Json::array();
    for (const auto& r : c.rows)
        rows.push_back({{"label", r.label}, {"valid", r.valid}, {"layers", r.layers}, {"max_depth", r.max_depth},
            {"avg_variation", r.avg_variation}, {"mean_depth", r.mean_depth},
            {"fallback_samples", r.fallback_samples}, {"failure", r.failure}});
    return {{"rows", rows}};
}

Json to_json(const IsoSurface& layer)
{
    std::vector<double> positions;
    positions.reserve(layer.vertices.size() * 3);
    for (const auto& v : layer.vertices) positions.insert(positions.end(), {v[0], v[1], v[2]});
    std::vector<std::int32_t> indices;
    indices.reserve(layer.triangles.size() * 3);
    for (const auto& t : layer.triangles) indices.insert(indices.end(), {t[0], t[1], t[2]});
    return {{"iso_value", layer.iso_value}, {"positions", positions}, {"indices", indices}};
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void save_scalar(const ScalarField& g, const std::filesystem::path& path)
{
    std::string text;
    text.reserve(static_cast<std::size_t>(g.size()) * 20);
    char buf[32];
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        const auto res = std::to_chars(buf, buf + sizeof buf, g[i]);
        text.append(buf, res.ptr);
        text.push_back('\n');
    }
    write_text(path, text);
}

ScalarField load_scalar(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double v = 0.0;
        const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
        if (res.ec != std::errc()) parse_fail("bad scalar value '" + line + "' in " + path.string());
        values.push_back(v);
    }
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void save_plan(const PeelingPlan& plan, const TetMesh& mesh, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

    write_text(dir / "config.json", to_json(plan.config).dump(2) + "\n");

    Json metrics = to_json(plan.metrics);
    metrics["valid"] = plan.valid;
    metrics["failed_stage"] = plan.failed_stage;
    metrics["failure"] = plan.failure;
    metrics["layers"] = plan.layers.layers.size();
    metrics["iso_values"] = plan.layers.iso_values();
    metrics["remaining_side"] = plan.remaining_side == RemainingSide::Above ? "above" : "below";
    metrics["curl_rounds"] = plan.curl_rounds;
    metrics["anchors"] = plan.anchors.size();
    metrics["notes"] = plan.notes;
    write_text(dir / "metrics.json", metrics.dump(2) + "\n");

    write_text(dir / "curl.json", to_json(plan.curl).dump(2) + "\n");

    Json sing{{"initial", to_json(plan.initial_singularities, mesh)}, {"final", to_json(plan.singularities, mesh)}};
    Json viol = Json::array();
    for (const auto& v : plan.violations)
        viol.push_back({{"iso_value", v.iso_value}, {"tets", v.tets.size()}, {"volume", v.volume}});
    sing["floating_violations"] = viol;
    write_text(dir / "singularity.json", sing.dump(2) + "\n");

    if (plan.scalar.size() > 0) save_scalar(plan.scalar, dir / "scalar.txt");
    export_layers(plan.layers, dir / "layers", plan.config.layer_format, plan.violations);
}

} // namespace peel
