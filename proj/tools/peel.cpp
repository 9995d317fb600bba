// peel: batch front-end for conformal peeling plans.
//
// Exit codes: 0 VALID plan / clean check, 2 INVALID plan / violations (report
// still written), 1 errors.

#include "peel/error.hpp"
#include "peel/log.hpp"
#include "peel/planner.hpp"
#include "peel/scenes.hpp"
#include "peel/serialize.hpp"
#include "peel/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace fs = std::filesystem;
using namespace peel;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kInvalid = 2;

TetMesh read_mesh(const fs::path& path)
{
    const auto format = guess_format(path);
    if (!format) throw Error(ErrorCode::InvalidArgument, "cannot tell the mesh format of " + path.string());
    return load_mesh(path, *format);
}

int cmd_plan(const fs::path& mesh_path, const fs::path& config_path, const fs::path& out)
{
    const TetMesh mesh = read_mesh(mesh_path);
    const PlanConfig cfg = load_plan_config(config_path);
    const PeelingPlan plan = run_plan(mesh, cfg, [](const ProgressEvent& e) {
        if (e.stage == "curl")
            log::info("curl " + std::to_string(e.iteration) + " I_rot " + std::to_string(e.i_rot));
        else
            log::info("stage " + e.stage + (e.message.empty() ? "" : " " + e.message));
    });
    save_plan(plan, mesh, out);
    std::cout << (plan.valid ? "VALID" : "INVALID") << " layers=" << plan.layers.layers.size()
              << " i_rot=" << plan.metrics.i_rot << " interior_extrema=" << plan.metrics.interior_extrema
              << " unresolved_boundaries=" << plan.metrics.unresolved_boundaries
              << " floating_violations=" << plan.metrics.floating_violations << "\n";
    if (!plan.failed_stage.empty()) std::cout << "failed stage " << plan.failed_stage << ": " << plan.failure << "\n";
    return plan.valid ? kOk : kInvalid;
}

int cmd_check(const fs::path& mesh_path, const fs::path& scalar_path, int layers, std::optional<fs::path> report)
{
    const TetMesh mesh = read_mesh(mesh_path);
    const ScalarField g = load_scalar(scalar_path);
    if (static_cast<std::size_t>(g.size()) != mesh.num_vertices())
        throw Error(ErrorCode::InvalidArgument, "scalar has " + std::to_string(g.size()) + " values for "
                + std::to_string(mesh.num_vertices()) + " vertices");
    const auto interior = interior_only(detect_point_singularities(mesh, g));
    const auto iso = layer_iso_values(g, {std::nullopt, layers});
    const RemainingSide side = mesh.has_tag(BoundaryTag::Part) ? part_side(mesh, g) : RemainingSide::Above;
    const auto violations = floating_volume_check(mesh, g, iso, side);

    Json j{{"interior_extrema", Json::array()}, {"floating_violations", Json::array()}, {"iso_values", iso},
        {"remaining_side", side == RemainingSide::Above ? "above" : "below"}};
    for (const auto& p : interior) {
        const Vec3& x = mesh.vertex(static_cast<std::size_t>(p.vertex));
        j["interior_extrema"].push_back({{"vertex", p.vertex}, {"kind", to_string(p.kind)}, {"position", {x[0], x[1], x[2]}}});
        std::cout << "interior " << to_string(p.kind) << " at vertex " << p.vertex << " (" << x.transpose() << ")\n";
    }
    for (const auto& v : violations) {
        j["floating_violations"].push_back({{"iso_value", v.iso_value}, {"tets", v.tets.size()}, {"volume", v.volume}});
        std::cout << "floating volume at iso " << v.iso_value << ": " << v.tets.size() << " tets\n";
    }
    const bool clean = interior.empty() && violations.empty();
    j["clean"] = clean;
    const fs::path out = report.value_or(fs::path(scalar_path).replace_extension(".check.json"));
    write_text(out, j.dump(2) + "\n");
    std::cout << (clean ? "CLEAN" : "VIOLATIONS") << " interior_extrema=" << interior.size()
              << " floating_violations=" << violations.size() << " report=" << out.string() << "\n";
    return clean ? kOk : kInvalid;
}

int cmd_compare(const fs::path& mesh_path, const fs::path& part_path, const std::vector<fs::path>& configs,
    const fs::path& out)
{
    const TetMesh mesh = read_mesh(mesh_path);
    const TriangleMesh part = load_surface(part_path);
    std::vector<PlanConfig> cfgs;
    for (const auto& c : configs) cfgs.push_back(load_plan_config(c));
    ComparisonReport report = compare_strategies(mesh, part, cfgs, worker_threads());
    for (std::size_t i = 0; i < report.rows.size(); ++i) report.rows[i].label = configs[i].stem().string();
    fs::create_directories(out);
    const std::string table = report.table();
    write_text(out / "comparison.txt", table);
    write_text(out / "comparison.json", to_json(report).dump(2) + "\n");
    std::cout << table;
    const bool all_valid = std::all_of(report.rows.begin(), report.rows.end(), [](const auto& r) { return r.valid; });
    return all_valid ? kOk : kInvalid;
}

int cmd_scene(const std::string& name, double resolution, const fs::path& out)
{
    const Scene s = make_scene(name, resolution);
    fs::create_directories(out);
    save_mesh(s.mesh, out / "mesh.vtk", MeshFormat::VtkLegacy);
    if (!s.part.triangles.empty()) save_obj(s.part, out / "part.obj");
    PlanConfig cfg;
    cfg.anchors = s.anchors;
    write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
    std::cout << name << ": " << s.mesh.num_vertices() << " vertices, " << s.mesh.num_tets() << " tets, "
              << s.anchors.size() << " anchors -> " << out.string() << "\n";
    return kOk;
}

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int)
{
    g_stop = 1;
}

int cmd_serve(const std::string& address, unsigned short port, std::optional<fs::path> ui_dir)
{
    SessionManager mgr;
    HttpServer server(mgr, {address, port, std::move(ui_dir)});
    const auto bound = server.start();
    std::cout << "listening on http://" << address << ":" << bound << "/api/v1" << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    server.stop();
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Conformal peeling planner for multi-axis roughing"};
    app.require_subcommand(1);
    bool verbose = false;
    bool quiet = false;
    app.add_flag("-v,--verbose", verbose, "Log progress");
    app.add_flag("-q,--quiet", quiet, "Only log errors");

    fs::path mesh, config, out, scalar, part;
    std::optional<fs::path> report, ui_dir;
    std::vector<fs::path> configs;
    int layers = 10;
    std::string address = "127.0.0.1";
    unsigned short port = 8080;
    std::string scene;
    double resolution = 1.0;

    auto* plan = app.add_subcommand("plan", "Run the planning pipeline and write a plan directory");
    plan->add_option("--mesh", mesh, "Tet mesh (.vtk or TetGen .node/.ele)")->required()->check(CLI::ExistingFile);
    plan->add_option("--config", config, "Plan config (JSON)")->required()->check(CLI::ExistingFile);
    plan->add_option("--out", out, "Output directory")->required();

    auto* check = app.add_subcommand("check", "Audit a scalar field for interior extrema and floating volumes");
    check->add_option("--mesh", mesh, "Tet mesh")->required()->check(CLI::ExistingFile);
    check->add_option("--scalar", scalar, "Per-vertex values, one per line")->required()->check(CLI::ExistingFile);
    check->add_option("--layers", layers, "Layer stations checked for floating volumes")->check(CLI::PositiveNumber);
    check->add_option("--report", report, "Report path (default <scalar>.check.json)");

    auto* compare = app.add_subcommand("compare", "Compare strategies by leftover cutting depth");
    compare->add_option("--mesh", mesh, "Tet mesh")->required()->check(CLI::ExistingFile);
    compare->add_option("--part", part, "Part surface (.obj or .stl)")->required()->check(CLI::ExistingFile);
    compare->add_option("--configs", configs, "Plan configs, one row each")->required()->expected(1, -1)->check(
        CLI::ExistingFile);
    compare->add_option("--out", out, "Output directory")->required();

    auto* serve = app.add_subcommand("serve", "Serve the HTTP/WebSocket API");
    serve->add_option("--port", port, "Port (0 picks a free one)");
    serve->add_option("--address", address, "Bind address");
    serve->add_option("--ui-dir", ui_dir, "Static UI files")->check(CLI::ExistingDirectory);

    auto* sc = app.add_subcommand("scene", "Export a built-in scene (mesh, tags, part, starter config)");
    sc->add_option("--name", scene, "Scene name")->required()->check(CLI::IsMember(scene_names()));
    sc->add_option("--resolution", resolution, "Size factor")->check(CLI::PositiveNumber);
    sc->add_option("--out", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kError;
    }
    log::set_level(quiet ? log::Level::Error : verbose ? log::Level::Info : log::Level::Warn);

    try {
        if (*plan) return cmd_plan(mesh, config, out);
        if (*check) return cmd_check(mesh, scalar, layers, report);
        if (*compare) return cmd_compare(mesh, part, configs, out);
        if (*serve) return cmd_serve(address, port, ui_dir);
        if (*sc) return cmd_scene(scene, resolution, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kError;
    }
    return kError;
}
