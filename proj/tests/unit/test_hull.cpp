#include "test_util.hpp"

#include "peel/hull.hpp"

#include <map>
#include <set>
#include <numbers>

using namespace peel;
using namespace peel::test;

namespace {

void expect_closed_convex(const TriangleMesh& h, const std::vector<Vec3>& points)
{
    std::map<std::pair<std::int32_t, std::int32_t>, int> directed;
    for (const auto& t : h.triangles)
        for (int k = 0; k < 3; ++k) directed[{t[k], t[(k + 1) % 3]}] += 1;
    // Every directed edge appears once and its reverse once: closed, oriented, edge-manifold.
    for (const auto& [e, c] : directed) {
        EXPECT_EQ(c, 1);
        EXPECT_EQ(directed.count({e.second, e.first}), 1u);
    }
    std::set<std::int32_t> used;
    for (const auto& t : h.triangles) used.insert(t.begin(), t.end());
    const long v = static_cast<long>(used.size());
    const long e = static_cast<long>(directed.size() / 2);
    const long f = static_cast<long>(h.triangles.size());
    EXPECT_EQ(v - e + f, 2);
    EXPECT_GT(h.signed_volume(), 0.0);
    const double tol = 1e-9;
    for (std::size_t t = 0; t < h.triangles.size(); ++t) {
        const Vec3 n = h.normal(t);
        const Vec3& a = h.vertices[h.triangles[t][0]];
        for (const auto& p : points) EXPECT_LE(n.dot(p - a), tol);
    }
}

} // namespace

TEST(ConvexHull, CubeCorners)
{
    std::vector<Vec3> pts;
    for (int i = 0; i < 8; ++i) pts.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
    const TriangleMesh h = convex_hull(pts);
    EXPECT_EQ(h.triangles.size(), 12u);
    EXPECT_NEAR(h.signed_volume(), 1.0, 1e-12);
    expect_closed_convex(h, pts);
}

TEST(ConvexHull, FourPointsGiveATet)
{
    const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    const TriangleMesh h = convex_hull(pts);
    EXPECT_EQ(h.triangles.size(), 4u);
    EXPECT_NEAR(h.signed_volume(), 1.0 / 6.0, 1e-15);
}

TEST(ConvexHull, RandomCloudContainsEveryPoint)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> d;
    std::vector<Vec3> pts;
    for (int i = 0; i < 400; ++i) pts.emplace_back(d(rng), 0.5 * d(rng), 2.0 * d(rng));
    // Interior duplicates and repeated hull points must not break the hull.
    pts.push_back(pts[3]);
    pts.push_back(Vec3::Zero());
    expect_closed_convex(convex_hull(pts), pts);
}

TEST(ConvexHull, SphereSamplesApproachSphereVolumeFromBelow)
{
    const double ball = 4.0 / 3.0 * std::numbers::pi;
    double last = 0.0;
    for (int n : {50, 400, 3000}) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(n));
        std::normal_distribution<double> d;
        std::vector<Vec3> pts;
        for (int i = 0; i < n; ++i) pts.push_back(Vec3(d(rng), d(rng), d(rng)).normalized());
        const double vol = convex_hull(pts).signed_volume();
        EXPECT_LE(vol, ball);
        EXPECT_GT(vol, last);
        last = vol;
    }
    EXPECT_GT(last, 0.97 * ball);
}

TEST(ConvexHull, DegenerateInputs)
{
    EXPECT_EQ(code_of([] { convex_hull({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}); }), ErrorCode::DegenerateInput);
    EXPECT_EQ(code_of([] { convex_hull({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0), Vec3(2, 3, 0)}); }),
        ErrorCode::DegenerateInput);
    EXPECT_EQ(code_of([] { convex_hull({Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2), Vec3(3, 3, 3)}); }),
        ErrorCode::DegenerateInput);
    EXPECT_EQ(code_of([] { convex_hull(std::vector<Vec3>(6, Vec3(1, 2, 3))); }), ErrorCode::DegenerateInput);
}

TEST(ConvexHull, SourceOfAPartSurface)
{
    const Scene s = make_scene("cavity", 0.5);
    const TriangleMesh h = convex_hull_source(s.part);
    expect_closed_convex(h, s.part.vertices);
    EXPECT_GE(h.signed_volume(), s.part.signed_volume() - 1e-9);
}
