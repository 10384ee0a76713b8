#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "loopsmc/analysis.hpp"
#include "loopsmc/sample_io.hpp"

using namespace loopsmc;

namespace {

// A 4-residue conformation whose backbone is a copy of `base` shifted by `dx`.
Conformation shifted(uint64_t id, double dx, double w = 1.0, const std::string &label = "a", double energy = 0)
{
	Conformation c;
	c.id = id;
	c.label = label;
	c.start = 10;
	c.sequence = parse_sequence("AGSA");
	c.weight = w;
	c.energy = energy;
	c.dihedrals.assign(4, {});
	c.chi.assign(4, {});
	c.side_chains.assign(4, {});
	for (int k = 0; k < 4; ++k)
		c.backbone.push_back({Vec3(dx + k, 0, 0), Vec3(dx + k, 1, 0), Vec3(dx + k, 2, 0), Vec3(dx + k, 3, 0)});
	return c;
}

DistanceMatrix from_dense(const std::vector<std::vector<double>> &d)
{
	DistanceMatrix m(d.size());
	for (size_t i = 0; i < d.size(); ++i)
		for (size_t j = i + 1; j < d.size(); ++j)
			m.set(i, j, float(d[i][j]));
	return m;
}

// Naive complete linkage on a dense matrix: recompute every cluster pair distance each round.
std::vector<std::set<size_t>> brute_complete(const std::vector<std::vector<double>> &d, size_t k)
{
	std::vector<std::set<size_t>> cl;
	for (size_t i = 0; i < d.size(); ++i)
		cl.push_back({i});
	while (cl.size() > k)
	{
		double best = INFINITY;
		size_t ba = 0, bb = 0;
		for (size_t a = 0; a < cl.size(); ++a)
			for (size_t b = a + 1; b < cl.size(); ++b)
			{
				double m = 0;
				for (size_t x : cl[a])
					for (size_t y : cl[b])
						m = std::max(m, d[x][y]);
				if (m < best)
				{
					best = m;
					ba = a;
					bb = b;
				}
			}
		cl[ba].insert(cl[bb].begin(), cl[bb].end());
		cl.erase(cl.begin() + long(bb));
	}
	return cl;
}

std::vector<std::set<size_t>> groups(const std::vector<int> &a)
{
	int k = *std::max_element(a.begin(), a.end()) + 1;
	std::vector<std::set<size_t>> g(static_cast<size_t>(k));
	for (size_t i = 0; i < a.size(); ++i)
		g[size_t(a[i])].insert(i);
	return g;
}

} // namespace

TEST(Distance, MatchesPairwiseRecomputation)
{
	std::vector<Conformation> s{shifted(0, 0), shifted(1, 0.5), shifted(2, 2), shifted(3, 0)};
	auto m = distance_matrix(s);
	for (size_t i = 0; i < s.size(); ++i)
		for (size_t j = 0; j < s.size(); ++j)
		{
			float expect = i == j ? 0.0f : float(backbone_rmsd(s[i].backbone_atoms(), s[j].backbone_atoms()));
			EXPECT_EQ(m(i, j), expect);
			EXPECT_EQ(m(i, j), m(j, i));
		}
	EXPECT_EQ(m(0, 3), 0.0f); // duplicate
	EXPECT_FLOAT_EQ(m(0, 2), 2.0f);
}

TEST(Distance, SegmentMismatch)
{
	auto a = shifted(0, 0), b = shifted(1, 0);
	b.start = 11;
	EXPECT_THROW(distance_matrix({a, b}), InvalidArgument);
}

TEST(Cluster, TwoTriplets)
{
	std::vector<std::vector<double>> d(6, std::vector<double>(6, 0));
	auto put = [&](size_t i, size_t j, double v) { d[i][j] = d[j][i] = v; };
	for (size_t i = 0; i < 6; ++i)
		for (size_t j = i + 1; j < 6; ++j)
			put(i, j, (i < 3) == (j < 3) ? 1.0 + 0.1 * double(i + j) : 10.0 + double(i * j));
	auto a = hcluster_complete(from_dense(d), 2);
	EXPECT_EQ(a, (std::vector<int>{0, 0, 0, 1, 1, 1}));
	auto g = groups(a);
	EXPECT_EQ(g, brute_complete(d, 2));
}

TEST(Cluster, ExtremesAndNumbering)
{
	std::vector<std::vector<double>> d{{0, 5, 1, 6}, {5, 0, 6, 2}, {1, 6, 0, 7}, {6, 2, 7, 0}};
	auto m = from_dense(d);
	EXPECT_EQ(hcluster_complete(m, 4), (std::vector<int>{0, 1, 2, 3}));
	EXPECT_EQ(hcluster_complete(m, 1), (std::vector<int>{0, 0, 0, 0}));
	EXPECT_EQ(hcluster_complete(m, 2), (std::vector<int>{0, 1, 0, 1}));
	EXPECT_THROW(hcluster_complete(m, 0), InvalidArgument);
	EXPECT_THROW(hcluster_complete(m, 5), InvalidArgument);
}

TEST(Cluster, TieBreakLowestPair)
{
	// all distances equal: merges go (0,1), then (0,2), ...
	std::vector<std::vector<double>> d(4, std::vector<double>(4, 1.0));
	for (size_t i = 0; i < 4; ++i)
		d[i][i] = 0;
	auto merges = complete_linkage(from_dense(d));
	ASSERT_EQ(merges.size(), 3u);
	EXPECT_EQ(merges[0].a, 0u);
	EXPECT_EQ(merges[0].b, 1u);
	EXPECT_EQ(merges[1].a, 0u);
	EXPECT_EQ(merges[1].b, 2u);
	EXPECT_EQ(hcluster_complete(from_dense(d), 3), (std::vector<int>{0, 0, 1, 2}));
}

// Random matrices: agrees with the naive algorithm and cuts are nested.
TEST(Cluster, RandomAgainstBruteForceAndNesting)
{
	Stream g(17, {});
	for (int trial = 0; trial < 20; ++trial)
	{
		size_t n = 5 + size_t(trial % 9);
		std::vector<Vec3> pts(n);
		for (auto &p : pts)
			p = Vec3(g.uniform() * 10, g.uniform() * 10, g.uniform() * 10);
		std::vector<std::vector<double>> d(n, std::vector<double>(n, 0));
		for (size_t i = 0; i < n; ++i)
			for (size_t j = 0; j < n; ++j)
				d[i][j] = double(float(distance(pts[i], pts[j])));
		auto m = from_dense(d);
		auto merges = complete_linkage(m);
		for (size_t k = 1; k <= n; ++k)
		{
			auto a = cut_tree(merges, n, k);
			auto gk = groups(a);
			EXPECT_EQ(gk.size(), k);
			auto bf = brute_complete(d, k);
			std::sort(bf.begin(), bf.end());
			auto sorted = gk;
			std::sort(sorted.begin(), sorted.end());
			EXPECT_EQ(sorted, bf) << "n=" << n << " k=" << k;
			// clusters numbered by lowest member
			for (size_t c = 1; c < gk.size(); ++c)
				EXPECT_LT(*gk[c - 1].begin(), *gk[c].begin());
			if (k > 1)
			{
				// the (k-1)-cut merges exactly two k-clusters
				auto coarse = groups(cut_tree(merges, n, k - 1));
				size_t changed = 0;
				for (auto &c : coarse)
					changed += std::find(gk.begin(), gk.end(), c) == gk.end();
				EXPECT_EQ(changed, 1u);
			}
		}
	}
}

TEST(Medoid, CollinearPicksMiddle)
{
	std::vector<std::vector<double>> d{{0, 1, 2}, {1, 0, 1}, {2, 1, 0}};
	EXPECT_EQ(medoids({0, 0, 0}, from_dense(d)), (std::vector<size_t>{1}));
	EXPECT_EQ(medoids({0, 1, 0}, from_dense(d)), (std::vector<size_t>{0, 1}));
	// equal sums: lowest order key wins
	std::vector<std::vector<double>> e{{0, 1}, {1, 0}};
	EXPECT_EQ(medoids({0, 0}, from_dense(e)), (std::vector<size_t>{0}));
	EXPECT_EQ(medoids({0, 0}, from_dense(e), {5, 2}), (std::vector<size_t>{1}));
}

TEST(Composition, PartitionIdentities)
{
	std::vector<Conformation> s{shifted(0, 0, 0.2, "ref"), shifted(1, 0.1, 0.3, "ref"), shifted(2, 5, 0.5, "ref"),
	                            shifted(0, 0, 1.0, "omi"), shifted(1, 5.1, 3.0, "omi")};
	std::vector<int> a{0, 0, 1, 0, 1};
	auto r = composition_table(a, s);
	ASSERT_EQ(r.variants, (std::vector<std::string>{"ref", "omi"}));
	EXPECT_EQ(r.clusters[0].n, (std::vector<size_t>{2, 1}));
	EXPECT_EQ(r.clusters[1].n, (std::vector<size_t>{1, 1}));
	EXPECT_NEAR(r.clusters[0].weight[0], 0.5, 1e-12);
	EXPECT_NEAR(r.clusters[0].weight[1], 0.25, 1e-12);
	for (size_t v = 0; v < 2; ++v)
	{
		double w = 0;
		for (auto &c : r.clusters)
			w += c.weight[v];
		EXPECT_NEAR(w, 1.0, 1e-12);
	}
}

TEST(ClusterRuns, IdenticalRepetitionsSplitEvenly)
{
	std::vector<Conformation> run;
	for (uint64_t i = 0; i < 12; ++i)
		run.push_back(shifted(i, double(i % 3) * 4 + 0.01 * double(i), 1.0 / 12));
	ClusterOptions opt;
	opt.k = 3;
	auto res = repetition_variation(run, run, opt);
	ASSERT_EQ(res.report.k, 3u);
	for (auto &c : res.report.clusters)
	{
		EXPECT_EQ(c.n[0], c.n[1]);
		EXPECT_NEAR(c.weight[0], c.weight[1], 1e-12);
	}
	EXPECT_GT(res.report.min_medoid_rmsd, 3.0);
}

TEST(ClusterRuns, DisjointRunsArePure)
{
	std::vector<Conformation> r1, r2;
	for (uint64_t i = 0; i < 6; ++i)
	{
		r1.push_back(shifted(i, 0.01 * double(i), 1.0));
		r2.push_back(shifted(i, 20 + 0.01 * double(i), 1.0));
	}
	ClusterOptions opt;
	opt.k = 2;
	auto res = repetition_variation(r1, r2, opt);
	for (auto &c : res.report.clusters)
		EXPECT_TRUE(c.n[0] == 0 || c.n[1] == 0);
	// medoids belong to their clusters
	for (size_t c = 0; c < res.report.k; ++c)
		EXPECT_EQ(res.report.assignment[res.report.clusters[c].medoid], int(c));
}

TEST(ClusterRuns, MedoidStableUnderReordering)
{
	std::vector<Conformation> run;
	for (uint64_t i = 0; i < 5; ++i)
		run.push_back(shifted(i, double(i), 0.2));
	ClusterOptions opt;
	opt.k = 1;
	auto a = cluster_runs({run}, opt);
	std::reverse(run.begin(), run.end());
	auto b = cluster_runs({run}, opt);
	EXPECT_EQ(a.samples[a.report.clusters[0].medoid].id, 2u);
	EXPECT_EQ(b.samples[b.report.clusters[0].medoid].id, 2u);
	EXPECT_TRUE(std::isnan(a.report.min_medoid_rmsd));
}

TEST(ClusterRuns, SubsampleLimitsAndDeclares)
{
	std::vector<Conformation> run;
	for (uint64_t i = 0; i < 40; ++i)
		run.push_back(shifted(i, 0.1 * double(i), i == 0 ? 10.0 : 0.1));
	run.push_back(shifted(99, 0, 0.0)); // zero weight never clustered
	ClusterOptions opt;
	opt.k = 2;
	opt.subsample = 10;
	auto res = cluster_runs({run}, opt);
	EXPECT_LE(res.samples.size(), 10u);
	ASSERT_EQ(res.report.subsample.size(), 1u);
	EXPECT_EQ(res.report.subsample[0].input, 40u);
	EXPECT_EQ(res.report.subsample[0].retained, res.samples.size());
	EXPECT_EQ(res.samples.front().id, 0u); // the heavy sample is always kept
	std::set<uint64_t> ids;
	for (auto &c : res.samples)
	{
		EXPECT_NE(c.id, 99u);
		EXPECT_TRUE(ids.insert(c.id).second);
	}
	EXPECT_THROW(cluster_runs({run}, ClusterOptions{50, 100, 1}), InvalidArgument);
}

TEST(Metrics, TemplateComparison)
{
	auto tpl = shifted(0, 0).backbone_atoms();
	std::vector<Conformation> s{shifted(3, 1.0, 0.5, "a", -5.0), shifted(1, 0.5, 0.5, "a", -1.0),
	                            shifted(2, 0.0, 0.0, "a", -9.0)};
	auto m = compare_to_template(s, tpl);
	EXPECT_NEAR(m.min_rmsd, 0.5, 1e-12); // the exact copy has zero weight
	EXPECT_EQ(m.min_rmsd_id, 1u);
	EXPECT_NEAR(m.lowest_energy_rmsd, 1.0, 1e-12);
	EXPECT_EQ(m.lowest_energy_id, 3u);
	s[2].weight = 0.1;
	EXPECT_EQ(compare_to_template(s, tpl).min_rmsd, 0.0);
	auto one = compare_to_template({s[0]}, tpl);
	EXPECT_EQ(one.min_rmsd, one.lowest_energy_rmsd);
	EXPECT_THROW(compare_to_template({shifted(0, 0, 0.0)}, tpl), InvalidArgument);
	// energy ties go to the lowest id
	std::vector<Conformation> tie{shifted(7, 2.0, 1, "a", -3), shifted(4, 1.0, 1, "a", -3)};
	EXPECT_EQ(compare_to_template(tie, tpl).lowest_energy_id, 4u);
}

TEST(SampleIo, RoundTrip)
{
	auto c = shifted(5, 0.25, 0.75, "ref", -12.5);
	c.dihedrals[1] = {-60.0, 140.0, 179.5};
	c.dihedrals[3] = {std::nullopt, std::nullopt, std::nullopt};
	c.chi[2] = {65.6};
	c.side_chains[2] = {Vec3(1.5, 2.5, 3.5), Vec3(0.1 + 0.2, 1e-7, -4.0)};
	c.increments = {1.0 / 3.0, -2.0};
	c.bridge = 1;
	c.backbone[3][3] = Vec3(NAN, NAN, NAN);
	auto zero = shifted(6, 0, 0.0);
	std::ostringstream os;
	write_samples(os, "ref", 10, "AGSA", {c, zero});
	std::istringstream in(os.str());
	auto f = read_samples(in);
	EXPECT_EQ(f.label, "ref");
	EXPECT_EQ(f.start, 10);
	ASSERT_EQ(f.conformations.size(), 1u); // zero-weight records are not written
	const auto &r = f.conformations[0];
	EXPECT_EQ(r.id, 5u);
	EXPECT_EQ(r.weight, 0.75);
	EXPECT_EQ(r.energy, -12.5);
	EXPECT_EQ(r.increments, c.increments);
	EXPECT_EQ(r.bridge, 1);
	EXPECT_EQ(*r.dihedrals[1].omega, 179.5);
	EXPECT_FALSE(r.dihedrals[3].phi);
	EXPECT_EQ(r.chi[2], c.chi[2]);
	EXPECT_EQ(r.side_chains[2][1].x, 0.1 + 0.2);
	EXPECT_TRUE(std::isnan(r.backbone[3][3].x));
	EXPECT_EQ(r.backbone[2][1].x, c.backbone[2][1].x);
	std::ostringstream again;
	write_samples(again, "ref", 10, "AGSA", f.conformations);
	EXPECT_EQ(again.str(), os.str().substr(0, again.str().size()));
}

TEST(SampleIo, Errors)
{
	std::istringstream empty("");
	EXPECT_THROW(read_samples(empty), DataError);
	std::istringstream bad("{not json}\n");
	EXPECT_THROW(read_samples(bad), DataError);
	std::istringstream version("{\"schema_version\":99,\"record\":\"header\"}\n");
	EXPECT_THROW(read_samples(version), DataError);
	std::istringstream truncated("{\"schema_version\":1,\"record\":\"header\",\"label\":\"a\",\"start\":1,"
	                             "\"sequence\":\"AGSA\"}\n{\"schema_version\":1,\"id\":3}\n");
	EXPECT_THROW(read_samples(truncated), DataError);
	EXPECT_THROW(load_samples("/nonexistent/file.jsonl"), DataError);
}
