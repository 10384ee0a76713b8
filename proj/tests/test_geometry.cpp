#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <vector>

#include "loopsmc/geometry.hpp"

using namespace loopsmc;

namespace {

// Builds a chain left to right from a fixed start frame; returns N, CA, C per residue.
struct Chain
{
	std::vector<Vec3> n, ca, c, o;
};

Chain build_chain(const std::vector<BackboneDihedrals> &d, const IdealGeometry &g)
{
	Chain ch;
	Vec3 c_prev(-1.2, 1.0, 0.3);
	Vec3 n0(0, 0, 0);
	Vec3 ca0 = place_atom(Vec3(1, 2, 3), c_prev, n0, g.n_ca, g.c_n_ca, 40.0);
	// first residue's previous carbonyl must sit at ideal geometry as well
	c_prev = place_atom(Vec3(5, -1, 2), ca0, n0, g.c_n, g.c_n_ca, 0.0);
	ch.n.push_back(n0);
	ch.ca.push_back(ca0);
	GrowthFrame f{c_prev, n0, ca0};
	for (const auto &x : d)
	{
		auto p = extend_backbone(f, x, Direction::left, g);
		ch.c.push_back(p.carbonyl_c);
		ch.o.push_back(p.carbonyl_o);
		ch.n.push_back(p.amide_n);
		ch.ca.push_back(p.alpha_c);
		f = {p.carbonyl_c, p.amide_n, p.alpha_c};
	}
	return ch;
}

} // namespace

TEST(Dihedral, PlanarTransIs180)
{
	EXPECT_NEAR(*dihedral_angle({1, 1, 0}, {1, 0, 0}, {2, 0, 0}, {2, -1, 0}), 180.0, 1e-12);
}

TEST(Dihedral, PlanarCisIsZero)
{
	EXPECT_NEAR(*dihedral_angle({1, 1, 0}, {1, 0, 0}, {2, 0, 0}, {2, 1, 0}), 0.0, 1e-12);
}

TEST(Dihedral, UnitCubePathMatchesCrossProductFormula)
{
	// b1=(1,0,0) b2=(0,1,0) b3=(0,0,1); n1=b1xb2=(0,0,1), n2=b2xb3=(1,0,0);
	// atan2(|b2| b1.n2, n1.n2) = atan2(1, 0) = +90 (checked with numpy).
	EXPECT_NEAR(*dihedral_angle({0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {1, 1, 1}), 90.0, 1e-12);
}

TEST(Dihedral, CollinearIsReportedNotNaN)
{
	EXPECT_FALSE(dihedral_angle({0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {2, 1, 0}).has_value());
	EXPECT_THROW(torsion({0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {2, 1, 0}), GeometryError);
}

TEST(Dihedral, RangeIsHalfOpen)
{
	EXPECT_DOUBLE_EQ(wrap_degrees(-180.0), 180.0);
	EXPECT_DOUBLE_EQ(wrap_degrees(540.0), 180.0);
	EXPECT_DOUBLE_EQ(wrap_degrees(-190.0), 170.0);
}

TEST(ExtendBackbone, RoundTripRecoversDihedrals)
{
	IdealGeometry g;
	auto ch = build_chain({{-60, -45, 180}, {-60, -45, 180}}, g);
	EXPECT_NEAR(torsion(ch.c[0], ch.n[1], ch.ca[1], ch.c[1]), -60.0, 1e-6);
	EXPECT_NEAR(torsion(ch.n[1], ch.ca[1], ch.c[1], ch.n[2]), -45.0, 1e-6);
	EXPECT_NEAR(std::abs(torsion(ch.ca[1], ch.c[1], ch.n[2], ch.ca[2])), 180.0, 1e-6);
}

TEST(ExtendBackbone, RandomRoundTrip)
{
	IdealGeometry g;
	std::mt19937_64 rng(7);
	std::uniform_real_distribution<double> U(-179.999, 180.0);
	for (int trial = 0; trial < 200; ++trial)
	{
		std::vector<BackboneDihedrals> d(5);
		for (auto &x : d)
			x = {U(rng), U(rng), U(rng)};
		auto ch = build_chain(d, g);
		for (size_t i = 1; i < d.size(); ++i)
		{
			EXPECT_LT(angle_distance(torsion(ch.c[i - 1], ch.n[i], ch.ca[i], ch.c[i]), d[i].phi), 1e-6);
			EXPECT_LT(angle_distance(torsion(ch.n[i], ch.ca[i], ch.c[i], ch.n[i + 1]), d[i].psi), 1e-6);
			EXPECT_LT(angle_distance(torsion(ch.ca[i], ch.c[i], ch.n[i + 1], ch.ca[i + 1]), d[i].omega), 1e-6);
		}
	}
}

TEST(ExtendBackbone, BondLengthsAndAnglesAreIdeal)
{
	IdealGeometry g;
	auto ch = build_chain({{-60, 140, 180}, {-75, 150, 178}, {60, 40, 180}, {-120, 120, -5}, {-60, -40, 180}}, g);
	for (size_t i = 0; i < ch.c.size(); ++i)
	{
		EXPECT_NEAR(distance(ch.n[i], ch.ca[i]), g.n_ca, 1e-6);
		EXPECT_NEAR(distance(ch.ca[i], ch.c[i]), g.ca_c, 1e-6);
		EXPECT_NEAR(distance(ch.c[i], ch.n[i + 1]), g.c_n, 1e-6);
		EXPECT_NEAR(distance(ch.c[i], ch.o[i]), g.c_o, 1e-6);
		EXPECT_NEAR(bond_angle(ch.n[i], ch.ca[i], ch.c[i]), g.n_ca_c, 1e-6);
		EXPECT_NEAR(bond_angle(ch.ca[i], ch.c[i], ch.n[i + 1]), g.ca_c_n, 1e-6);
		EXPECT_NEAR(bond_angle(ch.c[i], ch.n[i + 1], ch.ca[i + 1]), g.c_n_ca, 1e-6);
		EXPECT_NEAR(bond_angle(ch.ca[i], ch.c[i], ch.o[i]), g.ca_c_o, 1e-6);
		// carbonyl oxygen lies in the peptide plane, trans to N
		EXPECT_NEAR(std::abs(torsion(ch.ca[i], ch.n[i + 1], ch.c[i], ch.o[i])), 180.0, 1e-6);
	}
}

TEST(ExtendBackbone, RightGrowthRetracesLeftGrowth)
{
	// Build left to right, then regrow the same residues from the far end with the
	// same dihedrals: every atom must be reproduced.
	IdealGeometry g;
	std::vector<BackboneDihedrals> d{{-60, 140, 180}, {-75, 150, 178}, {60, 40, 180}, {-120, 120, -5}, {-60, -40, 180}};
	auto ch = build_chain(d, g);
	size_t last = ch.c.size() - 1;
	// frame (N_{j+1}, C_j, CA_j) with j = last
	GrowthFrame f{ch.n[last + 1], ch.c[last], ch.ca[last]};
	for (size_t j = last; j >= 1; --j)
	{
		BackboneDihedrals step{d[j].phi, d[j].psi, d[j - 1].omega};
		auto p = extend_backbone(f, step, Direction::right, g);
		EXPECT_LT(distance(p.amide_n, ch.n[j]), 1e-9);
		EXPECT_LT(distance(p.carbonyl_c, ch.c[j - 1]), 1e-9);
		EXPECT_LT(distance(p.carbonyl_o, ch.o[j - 1]), 1e-9);
		EXPECT_LT(distance(p.alpha_c, ch.ca[j - 1]), 1e-9);
		f = {p.amide_n, p.carbonyl_c, p.alpha_c};
	}
}

TEST(ExtendBackbone, MirrorAnchorsGiveMirroredChain)
{
	// Reflecting the anchors through z=0 and negating the dihedrals yields the
	// reflected coordinates, in both growth directions.
	IdealGeometry g;
	auto mirror = [](Vec3 v) { return Vec3(v.x, v.y, -v.z); };
	GrowthFrame f{{-1.2, 1.0, 0.3}, {0, 0, 0.1}, {1.4, 0.3, -0.2}};
	GrowthFrame fm{mirror(f.a), mirror(f.b), mirror(f.c)};
	BackboneDihedrals d{-65, 135, 175}, dm{65, -135, -175};
	for (auto dir : {Direction::left, Direction::right})
	{
		auto p = extend_backbone(f, d, dir, g);
		auto q = extend_backbone(fm, dm, dir, g);
		EXPECT_LT(distance(mirror(p.carbonyl_c), q.carbonyl_c), 1e-12);
		EXPECT_LT(distance(mirror(p.carbonyl_o), q.carbonyl_o), 1e-12);
		EXPECT_LT(distance(mirror(p.amide_n), q.amide_n), 1e-12);
		EXPECT_LT(distance(mirror(p.alpha_c), q.alpha_c), 1e-12);
	}
}

TEST(IdealGeometryFile, ParsesAndRoundTrips)
{
	IdealGeometry g;
	g.n_ca = 1.47;
	g.c_n_ca = 122.0;
	std::istringstream in(g.to_text());
	auto h = IdealGeometry::parse(in);
	EXPECT_DOUBLE_EQ(h.n_ca, 1.47);
	EXPECT_DOUBLE_EQ(h.c_n_ca, 122.0);
	EXPECT_DOUBLE_EQ(h.ca_c, g.ca_c);

	std::istringstream bad("n_ca = 1.4\nbogus = 3\n");
	EXPECT_THROW(IdealGeometry::parse(bad), DataError);
}

namespace {

// Independent span oracle: Cα–Cα distances over random chains of `links` peptide units.
std::pair<double, double> sampled_span_range(int links, int samples, const IdealGeometry &g)
{
	std::mt19937_64 rng(11);
	std::uniform_real_distribution<double> U(-179.999, 180.0);
	std::normal_distribution<double> W(180.0, 2.75);
	double lo = 1e9, hi = 0;
	for (int s = 0; s < samples; ++s)
	{
		std::vector<BackboneDihedrals> d(size_t(links) + 1);
		for (auto &x : d)
			x = {U(rng), U(rng), wrap_degrees(W(rng))};
		auto ch = build_chain(d, g);
		double dist = distance(ch.ca[0], ch.ca[size_t(links)]);
		lo = std::min(lo, dist);
		hi = std::max(hi, dist);
	}
	return {lo, hi};
}

} // namespace

TEST(Reachability, FarTargetIsUnreachable)
{
	IdealGeometry g;
	EXPECT_FALSE(reachability_check({0, 0, 0}, {100, 0, 0}, 3, g));
}

TEST(Reachability, JustInsideMaximumSpanIsReachable)
{
	IdealGeometry g;
	double dmax = max_ca_ca_span(g);
	EXPECT_NEAR(dmax, 3.80, 0.01);
	EXPECT_TRUE(reachability_check({0, 0, 0}, {3 * dmax - 1e-6, 0, 0}, 3, g));
	EXPECT_FALSE(reachability_check({0, 0, 0}, {3 * dmax + 1e-3, 0, 0}, 3, g));
}

TEST(Reachability, BoundAgreesWithSampledChains)
{
	IdealGeometry g;
	auto [lo, hi] = sampled_span_range(3, 20000, g);
	// the analytic bound must cover every sampled chain and not be grossly loose
	EXPECT_LE(hi, 3 * max_ca_ca_span(g) + 1e-9);
	EXPECT_GT(hi, 0.9 * 3 * max_ca_ca_span(g));
	ReachabilityTable table(g);
	EXPECT_GE(lo, table.min_span(3, false));
	auto [lo2, hi2] = sampled_span_range(2, 20000, g);
	EXPECT_GE(lo2, table.min_span(2, false));
	EXPECT_LT(lo2 - table.min_span(2, false), 1.0);
	EXPECT_LE(table.min_span(2, true), table.min_span(2, false));
	// three links cannot fold back onto the starting Cα
	EXPECT_FALSE(reachability_check({0, 0, 0}, {0, 0, 0}, 3, g));
	EXPECT_TRUE(reachability_check({0, 0, 0}, {lo, 0, 0}, 3, g));
	// a single link has a fixed span window
	auto [lo1, hi1] = sampled_span_range(1, 2000, g);
	EXPECT_TRUE(reachability_check({0, 0, 0}, {lo1, 0, 0}, 1, g));
	EXPECT_TRUE(reachability_check({0, 0, 0}, {hi1, 0, 0}, 1, g));
	EXPECT_FALSE(reachability_check({0, 0, 0}, {0, 0, 0}, 1, g));
	EXPECT_TRUE(table.check({0, 0, 0}, {ca_ca_span(g, 0.0), 0, 0}, 1, true));
	EXPECT_THROW(reachability_check({0, 0, 0}, {0, 0, 0}, -1, g), InvalidArgument);
}

TEST(Rmsd, IdentityIsZero)
{
	std::vector<Vec3> a{{1, 2, 3}, {4, 5, 6}};
	EXPECT_DOUBLE_EQ(backbone_rmsd(a, a), 0.0);
}

TEST(Rmsd, UniformTranslation)
{
	std::vector<Vec3> a{{1, 2, 3}, {4, 5, 6}, {-1, 0, 2}}, b;
	for (auto v : a)
		b.push_back(v + Vec3(3, 4, 0));
	EXPECT_NEAR(backbone_rmsd(a, b), 5.0, 1e-12);
}

TEST(Rmsd, SymmetricAndTriangle)
{
	std::mt19937_64 rng(3);
	std::normal_distribution<double> N(0, 2);
	auto rnd = [&] {
		std::vector<Vec3> v(8);
		for (auto &x : v)
			x = {N(rng), N(rng), N(rng)};
		return v;
	};
	for (int t = 0; t < 100; ++t)
	{
		auto a = rnd(), b = rnd(), c = rnd();
		EXPECT_DOUBLE_EQ(backbone_rmsd(a, b), backbone_rmsd(b, a));
		EXPECT_LE(backbone_rmsd(a, c), backbone_rmsd(a, b) + backbone_rmsd(b, c) + 1e-12);
		EXPECT_GE(backbone_rmsd(a, b), 0.0);
	}
}

TEST(Rmsd, LengthMismatchThrows)
{
	std::vector<Vec3> a(4), b(3);
	EXPECT_THROW(backbone_rmsd(a, b), InvalidArgument);
}
