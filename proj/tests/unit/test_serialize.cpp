#include "test_util.hpp"

#include "peel/serialize.hpp"

#include <fstream>
#include <sstream>

using namespace peel;
using namespace peel::test;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Relative path -> bytes for every file under dir.
std::map<std::string, std::string> tree(const fs::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

} // namespace

TEST(PlanConfigJson, RoundTrip)
{
    PlanConfig cfg;
    cfg.strategy = Strategy::ConvexHullSource;
    cfg.bc = BcChoice::DirichletStock;
    cfg.spacing = {1.5, std::nullopt};
    cfg.weights.alpha = 2.0;
    cfg.weights.beta_general = 1e4;
    cfg.blend_alpha = 0.25;
    cfg.blend_ring_depth = 3;
    cfg.peel_direction = Vec3(0, 1, 1);
    cfg.anchors = {{AnchorTarget::Face, 7, Vec3(0, 0, 1), 55.0, true}, {AnchorTarget::Vertex, 2, Vec3(1, 0, 0), std::nullopt, false}};
    cfg.hull_concavities = false;
    ResolutionDirective d;
    d.near = Vec3(0.5, 0.5, 1.0);
    d.anchor_direction = Vec3::UnitZ();
    ResolutionDirective lc;
    lc.action = DirectiveAction::LocalCorrection;
    lc.ring_depth = 2;
    cfg.directives = {d, lc};
    cfg.curl_threshold = 1e-3;
    cfg.curl_max_iters = 7;
    cfg.seed = 9;
    cfg.layer_format = LayerFormat::Stl;

    const Json j = to_json(cfg);
    const PlanConfig back = plan_config_from_json(j);
    EXPECT_EQ(to_json(back), j);
    EXPECT_EQ(back.strategy, cfg.strategy);
    EXPECT_EQ(back.spacing.target_depth, cfg.spacing.target_depth);
    EXPECT_EQ(back.anchors[0].weight, 55.0);
    EXPECT_EQ(back.directives[0].near, d.near);
    EXPECT_EQ(back.directives[1].ring_depth, 2);
    EXPECT_EQ(back.layer_format, LayerFormat::Stl);
}

TEST(PlanConfigJson, RejectsUnknownKeysAndBadValues)
{
    EXPECT_EQ(code_of([] { plan_config_from_json(Json{{"strategy", "ANCHORS_ONLY"}, {"layer_cuont", 3}}); }),
        ErrorCode::ParseError);
    EXPECT_EQ(code_of([] { plan_config_from_json(Json{{"strategy", "SPIRAL"}}); }), ErrorCode::ParseError);
    EXPECT_EQ(code_of([] { plan_config_from_json(Json{{"strategy", "PLANAR"}}); }), ErrorCode::ParseError);
    EXPECT_EQ(code_of([] { plan_config_from_json(Json{{"target_depth", 1.0}, {"layer_count", 3}}); }),
        ErrorCode::ParseError);
    EXPECT_EQ(code_of([] { plan_config_from_json(Json{{"anchors", {{{"target", "tet"}, {"id", 1}}}}}); }),
        ErrorCode::ParseError);
    EXPECT_NO_THROW(plan_config_from_json(Json::object()));
}

TEST(PlanConfigJson, LoadFromFile)
{
    TempDir dir("cfg");
    write_text(dir.path() / "c.json", R"({"strategy": "PART_NORMALS_SOURCE", "bc": "DIRICHLET_PART", "target_depth": 2})");
    const PlanConfig cfg = load_plan_config(dir.path() / "c.json");
    EXPECT_EQ(cfg.strategy, Strategy::PartNormalsSource);
    EXPECT_EQ(cfg.bc, BcChoice::DirichletPart);
    EXPECT_EQ(cfg.spacing.target_depth, 2.0);
    EXPECT_FALSE(cfg.spacing.layer_count.has_value());
    write_text(dir.path() / "bad.json", "{ not json");
    EXPECT_EQ(code_of([&] { load_plan_config(dir.path() / "bad.json"); }), ErrorCode::ParseError);
    EXPECT_EQ(code_of([&] { load_plan_config(dir.path() / "missing.json"); }), ErrorCode::IoError);
}

TEST(ScalarFile, RoundTripIsExact)
{
    TempDir dir("scalar");
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d;
    ScalarField g(50);
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = d(rng) * std::pow(10.0, static_cast<double>(i % 7) - 3);
    save_scalar(g, dir.path() / "g.txt");
    EXPECT_EQ(load_scalar(dir.path() / "g.txt"), g);
    write_text(dir.path() / "bad.txt", "1.0\nabc\n");
    EXPECT_EQ(code_of([&] { load_scalar(dir.path() / "bad.txt"); }), ErrorCode::ParseError);
}

TEST(SavePlan, DirectoryIsCompleteAndByteStable)
{
    TempDir dir("plan");
    const Scene s = conflict_scene(5);
    PlanConfig cfg;
    cfg.anchors = s.anchors;
    save_plan(run_plan(s.mesh, cfg), s.mesh, dir.path() / "a");
    save_plan(run_plan(s.mesh, cfg), s.mesh, dir.path() / "b");
    const auto a = tree(dir.path() / "a");
    EXPECT_EQ(a, tree(dir.path() / "b"));
    for (const char* f : {"config.json", "metrics.json", "curl.json", "singularity.json", "scalar.txt", "layers/manifest.json",
             "layers/layer_000.obj"})
        EXPECT_TRUE(a.contains(f)) << f;
    const Json metrics = Json::parse(a.at("metrics.json"));
    EXPECT_TRUE(metrics.contains("valid"));
    EXPECT_EQ(metrics["layers"].get<int>(), 10);
    EXPECT_EQ(plan_config_from_json(Json::parse(a.at("config.json"))).anchors.size(), s.anchors.size());
}

TEST(ReportJson, CurlAndLayerShapes)
{
    CurlRemovalReport r;
    r.iterations = 2;
    r.i_rot_history = {0.1, 0.01};
    const Json j = to_json(r);
    EXPECT_EQ(j["i_rot_history"].size(), 2u);
    EXPECT_EQ(j["iterations"], 2);

    IsoSurface s;
    s.iso_value = 0.5;
    s.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    s.triangles = {{0, 1, 2}};
    const Json l = to_json(s);
    EXPECT_EQ(l["positions"].size(), 9u);
    EXPECT_EQ(l["indices"].size(), 3u);
    EXPECT_EQ(l["iso_value"], 0.5);
}
