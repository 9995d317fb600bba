#include "test_util.hpp"

#include "peel/serialize.hpp"

#include <sys/wait.h>

#include <fstream>
#include <sstream>

using namespace peel;
using namespace peel::test;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string(PEEL_BINARY) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> tree(const fs::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

} // namespace

TEST(Cli, SceneThenPlanIsValidAndByteStable)
{
    TempDir dir("cli");
    const fs::path d = dir.path();
    ASSERT_EQ(run("scene --name cube --out " + (d / "cube").string(), d / "log"), 0) << slurp(d / "log");
    ASSERT_TRUE(fs::exists(d / "cube" / "mesh.vtk"));
    ASSERT_TRUE(fs::exists(d / "cube" / "mesh.tags"));
    const std::string plan_args = "plan --mesh " + (d / "cube" / "mesh.vtk").string() + " --config "
        + (d / "cube" / "config.json").string() + " --out ";
    ASSERT_EQ(run(plan_args + (d / "a").string(), d / "log"), 0) << slurp(d / "log");
    EXPECT_NE(slurp(d / "log").find("VALID"), std::string::npos);
    EXPECT_TRUE(fs::exists(d / "a" / "layers" / "manifest.json"));
    ASSERT_EQ(run(plan_args + (d / "b").string(), d / "log"), 0);
    EXPECT_EQ(tree(d / "a"), tree(d / "b"));
}

TEST(Cli, CheckFindsAnInjectedMaximum)
{
    TempDir dir("cli");
    const fs::path d = dir.path();
    ASSERT_EQ(run("scene --name cube --resolution 1.5 --out " + d.string(), d / "log"), 0);
    const TetMesh mesh = load_mesh(d / "mesh.vtk", MeshFormat::VtkLegacy);
    ScalarField g(static_cast<Eigen::Index>(mesh.num_vertices()));
    std::size_t centre = 0;
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        g[static_cast<Eigen::Index>(v)] = mesh.vertex(v)[2];
        if ((mesh.vertex(v) - Vec3::Constant(0.5)).norm() < (mesh.vertex(centre) - Vec3::Constant(0.5)).norm())
            centre = v;
    }
    save_scalar(g, d / "clean.txt");
    EXPECT_EQ(run("check --mesh " + (d / "mesh.vtk").string() + " --scalar " + (d / "clean.txt").string(), d / "log"), 0)
        << slurp(d / "log");

    g[static_cast<Eigen::Index>(centre)] = 5.0;
    save_scalar(g, d / "bump.txt");
    EXPECT_EQ(run("check --mesh " + (d / "mesh.vtk").string() + " --scalar " + (d / "bump.txt").string(), d / "log"), 2);
    const Json report = Json::parse(slurp(d / "bump.check.json"));
    ASSERT_EQ(report["interior_extrema"].size(), 1u);
    EXPECT_EQ(report["interior_extrema"][0]["vertex"], centre);
    EXPECT_EQ(report["interior_extrema"][0]["kind"], "MAX");
}

TEST(Cli, CompareWritesOneRowPerConfig)
{
    TempDir dir("cli");
    const fs::path d = dir.path();
    ASSERT_EQ(run("scene --name freeform --resolution 0.5 --out " + d.string(), d / "log"), 0);
    write_text(d / "planar.json", R"({"strategy": "PLANAR", "peel_direction": [0, 0, 1], "target_depth": 2, "depth_samples": 500})");
    write_text(d / "conformal.json",
        R"({"strategy": "PART_NORMALS_SOURCE", "bc": "DIRICHLET_PART", "target_depth": 2, "depth_samples": 500})");
    const int code = run("compare --mesh " + (d / "mesh.vtk").string() + " --part " + (d / "part.obj").string()
            + " --configs " + (d / "planar.json").string() + " " + (d / "conformal.json").string() + " --out "
            + (d / "cmp").string(),
        d / "log");
    EXPECT_TRUE(code == 0 || code == 2) << slurp(d / "log");
    const Json rows = Json::parse(slurp(d / "cmp" / "comparison.json"))["rows"];
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0]["label"], "planar");
    EXPECT_EQ(rows[1]["label"], "conformal");
}

TEST(Cli, ErrorsExitWithOne)
{
    TempDir dir("cli");
    const fs::path d = dir.path();
    ASSERT_EQ(run("scene --name cube --out " + d.string(), d / "log"), 0);
    write_text(d / "bad.json", R"({"strategy": "ANCHORS_ONLY", "not_a_key": 1})");
    EXPECT_EQ(run("plan --mesh " + (d / "mesh.vtk").string() + " --config " + (d / "bad.json").string() + " --out "
                      + (d / "o").string(),
                  d / "log"),
        1);
    EXPECT_NE(slurp(d / "log").find("not_a_key"), std::string::npos);
    EXPECT_EQ(run("plan --mesh /nonexistent.vtk --config x --out y", d / "log"), 1);
    EXPECT_EQ(run("", d / "log"), 1);
    EXPECT_EQ(run("scene --name teapot --out " + d.string(), d / "log"), 1);
}
