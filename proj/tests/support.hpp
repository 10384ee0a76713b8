#ifndef LOOPSMC_TEST_SUPPORT_HPP
#define LOOPSMC_TEST_SUPPORT_HPP

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "loopsmc/closure.hpp"
#include "loopsmc/sampler.hpp"

namespace loopsmc::testing {

// A compact ideal chain whose middle is removed and regrown.
struct ToyClosed
{
	Template tpl;
	SegmentSpec seg;
	LoopProblem prob;
};

inline ToyClosed toy_closed(const std::string &seq = "AVSGTADGSALKA", int seg_start = 4, int seg_len = 6)
{
	std::vector<BackboneDihedrals> d;
	for (size_t i = 0; i < seq.size(); ++i)
		d.push_back(i % 3 == 0 ? BackboneDihedrals{-65, -40, 180} : BackboneDihedrals{-120, 130, 180});
	ToyClosed t;
	t.tpl = build_ideal_template(seq, 1, d);
	t.seg = {seg_start, seg_start + seg_len - 1, seq.substr(size_t(seg_start - 1), size_t(seg_len))};
	t.prob = LoopProblem::from_template(t.tpl, t.seg);
	return t;
}

// Full-pairwise clash check of every placed atom, independent of the sampler's bookkeeping.
inline bool has_clash(const Conformation &c, const LoopProblem &prob, const PairwiseTable &T)
{
	std::vector<AtomRecord> mine;
	const int l = int(c.sequence.size());
	for (int k = 0; k < l; ++k)
	{
		const auto &topo = topology(c.sequence[size_t(k)]);
		for (int a = 0; a < 4; ++a)
		{
			bool anchor = (k == 0 && a < 2) || (prob.closed && k == l - 1 && a >= 1);
			if (!anchor && c.backbone[size_t(k)][size_t(a)].finite())
				mine.push_back({c.backbone[size_t(k)][size_t(a)], topo.atom_element(size_t(a)), c.sequence[size_t(k)],
				                uint8_t(a), c.start + k});
		}
		for (size_t a = 0; a < c.side_chains[size_t(k)].size(); ++a)
			mine.push_back({c.side_chains[size_t(k)][a], topo.atom_element(4 + a), c.sequence[size_t(k)],
			                uint8_t(4 + a), c.start + k});
	}
	auto bad = [&](const AtomRecord &x, const AtomRecord &y) {
		if (!counted_pair(x, y))
			return false;
		double d = distance(x.pos, y.pos);
		return d < T.max_distance() && std::isinf(T.lookup(x.element, y.element, d));
	};
	for (size_t i = 0; i < mine.size(); ++i)
	{
		for (auto &f : prob.fixed)
			if (bad(mine[i], f))
				return true;
		for (size_t j = i + 1; j < mine.size(); ++j)
			if (bad(mine[i], mine[j]))
				return true;
	}
	return false;
}

struct Fixture
{
	ClosureProblem problem;
	std::array<double, 6> truth{};
};

// Five residues built forward; residues 1..3 form the bridge.
inline Fixture random_problem(std::mt19937_64 &rng, const IdealGeometry &g)
{
	std::uniform_real_distribution<double> U(-179.999, 180.0);
	std::normal_distribution<double> W(180.0, 2.75);
	Vec3 c_prev(-1.2, 1.0, 0.3), n0(0, 0, 0);
	Vec3 ca0 = place_atom(Vec3(1, 2, 3), c_prev, n0, g.n_ca, g.c_n_ca, U(rng));
	c_prev = place_atom(Vec3(5, -1, 2), ca0, n0, g.c_n, g.c_n_ca, U(rng));
	std::vector<Vec3> n{n0}, ca{ca0}, c;
	GrowthFrame f{c_prev, n0, ca0};
	std::array<BackboneDihedrals, 5> d;
	for (auto &x : d)
	{
		x = {U(rng), U(rng), wrap_degrees(W(rng))};
		auto p = extend_backbone(f, x, Direction::left, g);
		c.push_back(p.carbonyl_c);
		n.push_back(p.amide_n);
		ca.push_back(p.alpha_c);
		f = {p.carbonyl_c, p.amide_n, p.alpha_c};
	}
	Fixture fx;
	fx.problem.left_anchor = {c[0], n[1], ca[1]};
	fx.problem.right_anchor = {ca[3], c[3], n[4]};
	fx.problem.omega = {d[1].omega, d[2].omega};
	fx.truth = {d[1].phi, d[1].psi, d[2].phi, d[2].psi, d[3].phi, d[3].psi};
	return fx;
}

inline bool contains(const std::vector<ClosureSolution> &sols, const std::array<double, 6> &truth, double tol)
{
	for (auto &s : sols)
	{
		bool all = true;
		for (size_t k = 0; k < 6; ++k)
			all = all && angle_distance(s.dihedrals[k], truth[k]) <= tol;
		if (all)
			return true;
	}
	return false;
}

} // namespace loopsmc::testing

#endif
