#pragma once

// Sequential Monte Carlo loop sampler.
//
// Residues are added one at a time on the (φ, ψ) grid, alternately from the
// left and right anchors. Each step scores every grid cell of every particle,
// keeps the cells whose side chains can still be completed, and resamples
// the intermediate population back to N. The last three residues are placed
// by loop closure; their side chains are chosen at the end.
//
// A step is evaluated twice: a scoring pass over all candidates that keeps
// only (cell, weight) records, and a rebuild pass for the resampled survivors.
// Both passes run the same code with the same keyed random streams, so the
// rebuilt particles are exactly the ones that were scored.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "loopsmc/closure.hpp"
#include "loopsmc/conformation.hpp"
#include "loopsmc/energy.hpp"
#include "loopsmc/error.hpp"
#include "loopsmc/geometry.hpp"
#include "loopsmc/resample.hpp"
#include "loopsmc/rng.hpp"
#include "loopsmc/template_io.hpp"

namespace loopsmc {

/// The gap to fill: anchors, fixed atoms and the segment sequence.
struct LoopProblem
{
	int start = 1;
	std::vector<AminoAcid> sequence;
	Vec3 c_prev, n_first, ca_first; // C of start-1; N, CA of the first residue
	bool closed = true;             // false: open chain grown from the left, no closure
	Vec3 n_next, c_last, ca_last, o_last;
	std::vector<AtomRecord> fixed;

	int length() const { return int(sequence.size()); }
	int end() const { return start + length() - 1; }

	std::string sequence_string() const
	{
		std::string s;
		for (auto a : sequence)
			s += one_letter(a);
		return s;
	}

	/// Removes the segment interior from the template and takes the anchors from it.
	static LoopProblem from_template(const Template &tpl, const SegmentSpec &seg)
	{
		Template m = apply_mutation(tpl, seg);
		LoopProblem p;
		p.start = seg.start;
		p.sequence = parse_sequence(seg.sequence);
		auto at = [&](int n, const char *nm) { return m.residue(n)->find(nm)->pos; };
		p.c_prev = at(seg.start - 1, "C");
		p.n_first = at(seg.start, "N");
		p.ca_first = at(seg.start, "CA");
		p.n_next = at(seg.end + 1, "N");
		p.ca_last = at(seg.end, "CA");
		p.c_last = at(seg.end, "C");
		p.o_last = at(seg.end, "O");
		p.fixed = m.fixed_atoms();
		return p;
	}

	/// A free chain in empty space, grown from a fixed first residue.
	static LoopProblem open_chain(const std::string &sequence, int start = 1, const IdealGeometry &g = {})
	{
		LoopProblem p;
		p.start = start;
		p.sequence = parse_sequence(sequence);
		if (p.sequence.size() < 4)
			throw InvalidArgument("segment must contain at least 4 residues");
		p.closed = false;
		p.n_first = Vec3(0, 0, 0);
		p.ca_first = Vec3(g.n_ca, 0, 0);
		p.c_prev = place_atom(Vec3(1, 1, 0), p.ca_first, p.n_first, g.c_n, g.c_n_ca, 180.0);
		p.fixed = {{p.c_prev, Element::C, AminoAcid::GLY, 2, start - 1},
		           {p.n_first, Element::N, p.sequence[0], 0, start},
		           {p.ca_first, Element::C, p.sequence[0], 1, start}};
		return p;
	}
};

enum class GrowthOrder
{
	alternating,  // a_1, a_l, a_2, a_{l-1}, ...
	left_to_right
};

struct SamplerConfig
{
	size_t particles = 50000;  // N
	size_t max_joints = 25;    // N_s: stored joint side-chain candidates per particle
	size_t max_rotamers = 20;  // n_s: stored rotamers per new residue
	uint64_t seed = 1;
	GrowthOrder order = GrowthOrder::alternating;
	bool sample_bridge_omega = false; // otherwise the two bridge ω sit at the density mode
	int threads = 0;                  // 0: OpenMP default

	void validate() const
	{
		if (particles < 1 || max_joints < 1 || max_rotamers < 1)
			throw InvalidArgument("particle and candidate counts must be at least 1");
		if (max_rotamers > 65535)
			throw InvalidArgument("max_rotamers must be below 65536");
	}
};

struct GrowthStep
{
	Direction dir;
	int residue; // 0-based segment index whose (φ, ψ) this step sets
};

/// Growth steps for a segment of length l. Closed segments leave three residues
/// for closure; open chains grow the first l-3 residues from the left.
inline std::vector<GrowthStep> plan_growth(int l, GrowthOrder order, bool closed = true)
{
	if (l < 4)
		throw InvalidArgument("segment must contain at least 4 residues");
	std::vector<GrowthStep> out;
	int lo = 0, hi = l - 1;
	for (int k = 0; k < l - 3; ++k)
	{
		if (closed && order == GrowthOrder::alternating && k % 2 == 1)
			out.push_back({Direction::right, hi--});
		else
			out.push_back({Direction::left, lo++});
	}
	return out;
}

/// First bridge residue: the number of left steps.
inline int bridge_start(const std::vector<GrowthStep> &plan)
{
	return int(std::count_if(plan.begin(), plan.end(), [](const GrowthStep &s) { return s.dir == Direction::left; }));
}

struct StepRecord
{
	int step = 0;
	char direction = 'L';
	int position = 0;        // author number of the residue whose (φ, ψ) was set
	size_t parents = 0;      // M
	size_t candidates = 0;   // (particle, cell) pairs evaluated
	size_t infeasible = 0;   // of those, how many had infinite ΔH
	size_t intermediates = 0; // M′: nonzero-weight growths (closure roots counted separately)
	double ess = 0;
	size_t survivors = 0;    // population after resampling
};

struct RunLog
{
	std::vector<StepRecord> steps;
	size_t finalized = 0;
	size_t zero_weight = 0;

	void write_tsv(std::ostream &os) const
	{
		os << "step\tdirection\tposition\tM\tcandidates\tinfeasible\tM_prime\tESS\tsurvivors\n";
		char ess[32];
		for (auto &s : steps)
		{
			std::snprintf(ess, sizeof ess, "%.6f", s.ess);
			os << s.step << '\t' << s.direction << '\t' << s.position << '\t' << s.parents << '\t' << s.candidates
			   << '\t' << s.infeasible << '\t' << s.intermediates << '\t' << ess << '\t' << s.survivors << '\n';
		}
		os << "final\t-\t-\t" << finalized << "\t-\t" << zero_weight << "\t-\t-\t" << (finalized - zero_weight)
		   << '\n';
	}
};

struct WeightedSample
{
	std::string label;
	int start = 0;
	std::string sequence;
	std::vector<Conformation> conformations; // weight > 0 only; weights sum to 1
	RunLog log;
};

namespace detail {

struct PlacedRotamer
{
	std::array<double, 4> chi{};
	std::vector<AtomRecord> atoms;
};

/// Stored rotamers of one residue, shared by every particle descending from the step that placed them.
struct RotamerSet
{
	int residue = 0;
	Vec3 center; // CA
	double radius = 0;
	std::vector<PlacedRotamer> rot;
};

struct Joint
{
	std::vector<uint16_t> pick; // rotamer index per slot
	double dh = 0;              // accumulated side-chain ΔH
};

struct Particle
{
	std::vector<std::array<Vec3, 4>> bb; // N, CA, C, O; NaN when not yet placed
	std::vector<ResidueDihedrals> dih;
	std::vector<std::array<int, 2>> cell; // grid indices of sampled (φ, ψ), -1 otherwise
	std::vector<AtomRecord> sampled;      // placed backbone atoms not in the template
	std::vector<std::shared_ptr<const RotamerSet>> slots;
	std::vector<Joint> joints;
	std::vector<double> increments;
	double weight = 1;
	int left = 0;  // next residue grown from the left: frame (C_{left-1}, N_left, CA_left)
	int right = 0; // next residue grown from the right: frame (N_{right+1}, C_right, CA_right)
};

struct Candidate
{
	double logw;
	uint32_t item;  // parent * n + outer
	uint16_t inner;
	uint8_t sol;
};

using Mask = std::vector<uint64_t>;

inline Mask full_mask(size_t n)
{
	Mask m((n + 63) / 64, ~uint64_t(0));
	if (n % 64)
		m.back() = (uint64_t(1) << (n % 64)) - 1;
	if (n == 0)
		m.clear();
	return m;
}

inline bool intersects(const Mask &a, const Mask &b)
{
	for (size_t i = 0; i < a.size(); ++i)
		if (a[i] & b[i])
			return true;
	return false;
}

inline double pair_sum(const AtomRecord &a, std::span<const AtomRecord> set, const PairwiseTable &t)
{
	double e = 0;
	for (auto &b : set)
	{
		e += pair_energy(t, a, b);
		if (std::isinf(e))
			return kInf;
	}
	return e;
}

inline bool clashes_any(const AtomRecord &a, std::span<const AtomRecord> set, const PairwiseTable &t)
{
	for (auto &b : set)
		if (t.clashes(a.element, b.element, distance2(a.pos, b.pos)) && counted_pair(a, b))
			return true;
	return false;
}

inline bool sets_clash(std::span<const AtomRecord> a, std::span<const AtomRecord> b, const PairwiseTable &t)
{
	for (auto &x : a)
		if (clashes_any(x, b, t))
			return true;
	return false;
}

inline bool self_clash(std::span<const AtomRecord> a, const PairwiseTable &t)
{
	for (size_t i = 0; i < a.size(); ++i)
		if (clashes_any(a[i], a.subspan(i + 1), t))
			return true;
	return false;
}

struct Context
{
	const LoopProblem &prob;
	const EnergyModel &model;
	const SamplerConfig &cfg;
	TemplateField field;
	ReachabilityTable reach;
	std::vector<GrowthStep> plan;
	int bridge = -1;
	int n = 72;
	double clash_reach = 0;
	bool use_dih, use_bb, use_sc;

	Context(const LoopProblem &p, const EnergyModel &m, const SamplerConfig &c)
		: prob(p), model(m), cfg(c), field(p.fixed, &m.pairwise), reach(m.geometry)
	{
		plan = plan_growth(p.length(), p.closed ? c.order : GrowthOrder::left_to_right, p.closed);
		if (p.closed)
			bridge = bridge_start(plan);
		n = m.rama.size();
		clash_reach = m.pairwise.clash_reach();
		use_dih = m.beta.beta1 != 0;
		use_bb = m.beta.beta2 != 0;
		use_sc = m.beta.beta4 != 0;
	}

	AminoAcid type(int residue) const { return prob.sequence[size_t(residue)]; }

	AtomRecord rec(const Vec3 &pos, int residue, int topo) const
	{
		AminoAcid aa = residue < 0 ? AminoAcid::GLY : residue >= prob.length() ? AminoAcid::GLY : type(residue);
		return {pos, topology(aa).atom_element(size_t(topo)), aa, uint8_t(topo), prob.start + residue};
	}

	/// Backbone atom of a residue, including the template neighbours at -1 and l.
	Vec3 atom(const Particle &p, int residue, int topo) const
	{
		if (residue < 0)
			return prob.c_prev;
		if (residue >= prob.length())
			return prob.n_next;
		return p.bb[size_t(residue)][size_t(topo)];
	}

	bool cis_possible(int from, int to) const
	{
		if (model.omega.proline_cis_fraction <= 0)
			return false;
		for (int k = std::max(from + 1, 0); k <= to && k < prob.length(); ++k)
			if (type(k) == AminoAcid::PRO)
				return true;
		return false;
	}
};

inline void build_rotamer_atoms(const Context &ctx, int residue, const Vec3 &n, const Vec3 &ca, const Vec3 &c,
                                const std::array<double, 4> &chi, std::vector<AtomRecord> &out,
                                std::vector<Vec3> &scratch)
{
	AminoAcid aa = ctx.type(residue);
	build_side_chain(aa, n, ca, c, chi.data(), scratch);
	out.clear();
	for (size_t k = 0; k < scratch.size(); ++k)
		out.push_back(ctx.rec(scratch[k], residue, int(4 + k)));
}

/// Library rotamers of a residue with Normal noise on χ1 (none for proline).
inline std::vector<PlacedRotamer> perturbed_rotamers(const Context &ctx, int residue, const Vec3 &n, const Vec3 &ca,
                                                     const Vec3 &c, Stream noise)
{
	AminoAcid aa = ctx.type(residue);
	const auto &lib = ctx.model.rotamers.rotamers(aa);
	std::vector<PlacedRotamer> out(lib.size());
	std::vector<Vec3> scratch;
	bool perturb = chi_count(aa) > 0 && aa != AminoAcid::PRO && ctx.model.rotamers.chi1_sd > 0;
	for (size_t i = 0; i < lib.size(); ++i)
	{
		out[i].chi = lib[i].chi;
		if (perturb)
			out[i].chi[0] = wrap_degrees(out[i].chi[0] + ctx.model.rotamers.chi1_sd * noise.normal());
		build_rotamer_atoms(ctx, residue, n, ca, c, out[i].chi, out[i].atoms, scratch);
	}
	return out;
}

inline double rotamer_radius(const PlacedRotamer &r, const Vec3 &ca)
{
	double d = 0;
	for (auto &a : r.atoms)
		d = std::max(d, distance(a.pos, ca));
	return d;
}

/// Scores and rebuilds the growths of one parent particle for one value of the
/// first dihedral of the step (φ for left steps, ψ for right steps).
class StepEvaluator
{
  public:
	StepEvaluator(const Context &ctx, const Particle &parent, uint32_t pid, int step, int outer)
		: ctx_(ctx), parent_(parent), pid_(pid), step_(step), outer_(outer), gs_(ctx.plan[size_t(step)])
	{
		const auto &g = ctx.model.geometry;
		const int r = gs_.residue;
		const double a = ctx.model.rama.angle(outer);
		if (gs_.dir == Direction::left)
		{
			frame_ = {ctx.atom(parent, r - 1, 2), ctx.atom(parent, r, 0), ctx.atom(parent, r, 1)};
			Vec3 c = place_atom(frame_.a, frame_.b, frame_.c, g.ca_c, g.n_ca_c, a);
			outer_atom_ = ctx.rec(c, r, 2);
			res_n_ = frame_.b;
			res_ca_ = frame_.c;
			res_c_ = c;
		}
		else
		{
			frame_ = {ctx.atom(parent, r + 1, 0), ctx.atom(parent, r, 2), ctx.atom(parent, r, 1)};
			Vec3 nn = place_atom(frame_.a, frame_.b, frame_.c, g.n_ca, g.n_ca_c, a);
			outer_atom_ = ctx.rec(nn, r, 0);
			res_n_ = nn;
			res_ca_ = frame_.c;
			res_c_ = frame_.b;
		}
		const auto &T = ctx.model.pairwise;
		if (ctx.use_bb)
		{
			e_outer_bb_ = ctx.field.atom_energy(outer_atom_);
			if (!std::isinf(e_outer_bb_))
				e_outer_bb_ += pair_sum(outer_atom_, parent.sampled, T);
			if (std::isinf(e_outer_bb_))
			{
				dead_ = true;
				return;
			}
		}
		rot_ = perturbed_rotamers(ctx, r, res_n_, res_ca_, res_c_,
		                          make_stream(ctx.cfg.seed, StreamTag::chi, uint64_t(step), pid, uint64_t(outer)));
		const size_t R = rot_.size();
		radius_.resize(R);
		clash_outer_.assign(R, 0);
		for (size_t i = 0; i < R; ++i)
		{
			radius_[i] = rotamer_radius(rot_[i], res_ca_);
			if (!ctx.use_sc)
				continue;
			auto &atoms = rot_[i].atoms;
			bool clash = self_clash(atoms, T) || sets_clash(atoms, std::span(&outer_atom_, 1), T);
			for (size_t k = 0; k < atoms.size() && !clash; ++k)
				clash = ctx.field.atom_clashes(atoms[k]) || clashes_any(atoms[k], parent.sampled, T);
			clash_outer_[i] = clash;
		}
		need_energy_ = R > ctx.cfg.max_rotamers;
		e_outer_.assign(R, std::numeric_limits<double>::quiet_NaN());
		if (need_energy_)
			for (size_t i = 0; i < R; ++i)
				outer_rotamer_energy(i);
		joints_ = parent.joints.size();
		b_mask_.resize(R);
		b_done_.assign(R, 0);
		if (ctx.use_sc)
			a_outer_ = joint_mask(std::span(&outer_atom_, 1));
		else
			a_outer_ = full_mask(joints_);
	}

	const GrowthStep &step() const { return gs_; }

	/// Scores inner index `inner`, appending feasible growths to `out` (may be null).
	/// Returns the number of closure solutions examined plus one, or 0 when the
	/// cell was rejected before closure. With `child` set, builds the growth
	/// whose closure solution index is `want_sol`.
	bool evaluate(int inner, std::vector<Candidate> *out, int want_sol = -1, Particle *child = nullptr)
	{
		if (dead_)
			return false;
		const auto &ctx = ctx_;
		const auto &m = ctx.model;
		const auto &g = m.geometry;
		const auto &T = m.pairwise;
		const int r = gs_.residue;
		const bool left = gs_.dir == Direction::left;
		const int phi_i = left ? outer_ : inner, psi_i = left ? inner : outer_;
		const uint32_t cell = uint32_t(phi_i * ctx.n + psi_i);
		const double phi = m.rama.angle(phi_i), psi = m.rama.angle(psi_i);

		double rama = 0;
		if (ctx.use_dih)
		{
			rama = m.rama.term_by_index(ctx.type(r), phi_i, psi_i);
			if (std::isinf(rama))
				return false;
		}
		// ω of the peptide bond being formed; the density is that of the following residue
		AminoAcid wtype = left ? ctx.type(r + 1) : ctx.type(r);
		Stream os = make_stream(ctx.cfg.seed, StreamTag::omega, uint64_t(step_), pid_, cell);
		double u = os.uniform(), z = os.normal();
		double omega = m.omega.draw(wtype, u, z);
		double logp_w = m.omega.logdensity(wtype, omega);

		auto placed = extend_backbone(frame_, {phi, psi, omega}, gs_.dir, g);
		std::array<AtomRecord, 3> in;
		if (left)
			in = {ctx.rec(placed.carbonyl_o, r, 3), ctx.rec(placed.amide_n, r + 1, 0),
			      ctx.rec(placed.alpha_c, r + 1, 1)};
		else
			in = {ctx.rec(placed.carbonyl_c, r - 1, 2), ctx.rec(placed.carbonyl_o, r - 1, 3),
			      ctx.rec(placed.alpha_c, r - 1, 1)};
		const Vec3 &new_ca = placed.alpha_c;

		if (ctx.prob.closed)
		{
			int target = left ? parent_.right : parent_.left;
			int from = left ? r + 1 : target, to = left ? target : r - 1;
			Vec3 tca = ctx.atom(parent_, target, 1);
			if (!ctx.reach.check(new_ca, tca, to - from, ctx.cis_possible(from, to)))
				return false;
		}

		double ebb = 0;
		if (ctx.use_bb)
		{
			ebb = e_outer_bb_;
			for (size_t k = 0; k < 3 && !std::isinf(ebb); ++k)
			{
				ebb += ctx.field.atom_energy(in[k]);
				ebb += pair_sum(in[k], parent_.sampled, T);
				ebb += pair_energy(T, outer_atom_, in[k]);
				for (size_t j = k + 1; j < 3; ++j)
					ebb += pair_energy(T, in[k], in[j]);
			}
			if (std::isinf(ebb))
				return false;
		}
		const double dh = (ctx.use_dih ? m.beta.beta1 * (rama - logp_w) : 0.0) + (ctx.use_bb ? m.beta.beta2 * ebb : 0.0);
		const double logw = std::log(parent_.weight) - dh - logp_w;

		// side chain of the residue this step completes
		std::vector<size_t> &kept = kept_;
		kept.clear();
		{
			const size_t R = rot_.size();
			finite_.assign(R, 0);
			size_t nf = 0;
			for (size_t i = 0; i < R; ++i)
			{
				bool ok = !clash_outer_[i];
				if (ok && ctx.use_sc)
					ok = !near_clash(rot_[i].atoms, radius_[i], in);
				finite_[i] = ok;
				nf += ok;
			}
			if (nf == 0)
				return false;
			if (nf <= ctx.cfg.max_rotamers)
			{
				for (size_t i = 0; i < R; ++i)
					if (finite_[i])
						kept.push_back(i);
			}
			else
			{
				e_in_.assign(R, kInf);
				double emin = kInf;
				for (size_t i = 0; i < R; ++i)
					if (finite_[i])
					{
						e_in_[i] = inner_rotamer_energy(i, in);
						emin = std::min(emin, e_in_[i]);
					}
				wts_.assign(R, 0.0);
				for (size_t i = 0; i < R; ++i)
					if (std::isfinite(e_in_[i]))
						wts_[i] = std::exp(-(e_in_[i] - emin));
				double us = make_stream(ctx.cfg.seed, StreamTag::rotamer_subset, uint64_t(step_), pid_, cell).uniform();
				kept = sample_capped(wts_, ctx.cfg.max_rotamers, us);
			}
		}
		Mask a_step = a_outer_;
		if (ctx.use_sc)
		{
			Mask a_in = joint_mask(in);
			for (size_t w = 0; w < a_step.size(); ++w)
				a_step[w] &= a_in[w];
		}

		const uint32_t item = uint32_t(pid_) * uint32_t(ctx.n) + uint32_t(outer_);
		const bool closing = ctx.prob.closed && step_ + 1 == int(ctx.plan.size());
		if (!closing)
		{
			if (!feasible(kept, a_step, nullptr))
				return false;
			if (out)
				out->push_back({logw, item, uint16_t(inner), 0});
			if (child)
				build_child(*child, placed, in, phi_i, psi_i, omega, dh, logw, kept, nullptr, 0.0, nullptr, cell, 0);
			return true;
		}

		// closure of the three bridge residues
		const int a = ctx.bridge;
		ClosureProblem cp;
		std::array<Vec3, 4> nb{placed.carbonyl_c, placed.carbonyl_o, placed.amide_n, placed.alpha_c};
		auto step_atom = [&](int res, int topo) -> Vec3 {
			// atoms placed by this step are not yet in the parent
			if (left)
			{
				if (res == r && topo == 2) return nb[0];
				if (res == r + 1 && topo == 0) return nb[2];
				if (res == r + 1 && topo == 1) return nb[3];
			}
			else
			{
				if (res == r && topo == 0) return nb[2];
				if (res == r - 1 && topo == 2) return nb[0];
				if (res == r - 1 && topo == 1) return nb[3];
			}
			return ctx.atom(parent_, res, topo);
		};
		cp.left_anchor = {step_atom(a - 1, 2), step_atom(a, 0), step_atom(a, 1)};
		cp.right_anchor = {step_atom(a + 2, 1), step_atom(a + 2, 2), step_atom(a + 3, 0)};
		cp.bridge_types = {one_letter(ctx.type(a)), one_letter(ctx.type(a + 1)), one_letter(ctx.type(a + 2))};
		double logp_bridge = 0;
		if (ctx.cfg.sample_bridge_omega)
		{
			Stream bs = make_stream(ctx.cfg.seed, StreamTag::bridge_omega, uint64_t(step_), pid_, cell);
			for (int k = 0; k < 2; ++k)
			{
				double u1 = bs.uniform(), z1 = bs.normal();
				cp.omega[size_t(k)] = m.omega.draw(ctx.type(a + 1 + k), u1, z1);
			}
		}
		else
			cp.omega = {m.omega.mode(ctx.type(a + 1)), m.omega.mode(ctx.type(a + 2))};
		for (int k = 0; k < 2; ++k)
			logp_bridge += m.omega.logdensity(ctx.type(a + 1 + k), cp.omega[size_t(k)]);

		auto sols = solve_closure(cp, g);
		const std::array<AtomRecord, 4> step_recs{outer_atom_, in[0], in[1], in[2]};
		bool any = false;
		for (size_t s = 0; s < sols.size(); ++s)
		{
			const auto &sol = sols[s];
			std::array<AtomRecord, 7> br{ctx.rec(sol.c0, a, 2),     ctx.rec(sol.o0, a, 3),     ctx.rec(sol.n1, a + 1, 0),
			                             ctx.rec(sol.ca1, a + 1, 1), ctx.rec(sol.c1, a + 1, 2), ctx.rec(sol.o1, a + 1, 3),
			                             ctx.rec(sol.n2, a + 2, 0)};
			double dih = 0;
			if (ctx.use_dih)
			{
				if (m.charge_closure_dihedrals)
					for (int k = 0; k < 3; ++k)
						dih += m.rama.binned_term(ctx.type(a + k), sol.dihedrals[size_t(2 * k)],
						                          sol.dihedrals[size_t(2 * k + 1)]);
				dih -= logp_bridge;
				if (std::isinf(dih))
					continue;
			}
			double eb = 0;
			if (ctx.use_bb)
			{
				for (size_t k = 0; k < br.size() && !std::isinf(eb); ++k)
				{
					eb += ctx.field.atom_energy(br[k]);
					eb += pair_sum(br[k], parent_.sampled, T);
					eb += pair_sum(br[k], step_recs, T);
					for (size_t j = k + 1; j < br.size(); ++j)
						eb += pair_energy(T, br[k], br[j]);
				}
				if (std::isinf(eb))
					continue;
			}
			double dhc = (ctx.use_dih ? m.beta.beta1 * dih : 0.0) + (ctx.use_bb ? m.beta.beta2 * eb : 0.0);
			double logw_s = logw - dhc - (ctx.cfg.sample_bridge_omega ? logp_bridge : 0.0);
			Mask a_sol = a_step;
			if (ctx.use_sc)
			{
				Mask mb = joint_mask(br);
				for (size_t w = 0; w < a_sol.size(); ++w)
					a_sol[w] &= mb[w];
			}
			if (!feasible(kept, a_sol, &br))
				continue;
			any = true;
			if (out)
				out->push_back({logw_s, item, uint16_t(inner), uint8_t(s)});
			if (child && int(s) == want_sol)
			{
				BridgeInfo bi{&sol, &br, cp.omega};
				build_child(*child, placed, in, phi_i, psi_i, omega, dh, logw_s, kept, &bi, dhc, &br, cell, s);
			}
		}
		return any;
	}

  private:
	struct BridgeInfo
	{
		const ClosureSolution *sol;
		const std::array<AtomRecord, 7> *atoms;
		std::array<double, 2> omega;
	};

	/// Joints (bit per stored joint) whose side chains do not clash with `atoms`.
	template <class Atoms>
	Mask joint_mask(const Atoms &atoms)
	{
		Mask m = full_mask(joints_);
		if (joints_ == 0)
			return m;
		const auto &T = ctx_.model.pairwise;
		for (size_t k = 0; k < parent_.slots.size(); ++k)
		{
			const auto &slot = *parent_.slots[k];
			double reach = slot.radius + ctx_.clash_reach;
			bool near = false;
			for (auto &x : atoms)
				if (distance2(x.pos, slot.center) <= reach * reach)
				{
					near = true;
					break;
				}
			if (!near)
				continue;
			flags_.assign(slot.rot.size(), 0);
			bool anyflag = false;
			for (size_t i = 0; i < slot.rot.size(); ++i)
				for (auto &x : atoms)
					if (clashes_any(x, slot.rot[i].atoms, T))
					{
						flags_[i] = 1;
						anyflag = true;
						break;
					}
			if (!anyflag)
				continue;
			for (size_t j = 0; j < joints_; ++j)
				if (flags_[parent_.joints[j].pick[k]])
					m[j / 64] &= ~(uint64_t(1) << (j % 64));
		}
		return m;
	}

	/// Joints compatible with rotamer i of the new residue.
	const Mask &rotamer_mask(size_t i)
	{
		if (b_done_[i])
			return b_mask_[i];
		b_done_[i] = 1;
		b_mask_[i] = ctx_.use_sc ? joint_mask(rot_[i].atoms) : full_mask(joints_);
		return b_mask_[i];
	}

	bool near_clash(const std::vector<AtomRecord> &atoms, double radius, std::span<const AtomRecord> others) const
	{
		double reach = radius + ctx_.clash_reach;
		for (auto &o : others)
			if (distance2(o.pos, res_ca_) <= reach * reach && clashes_any(o, atoms, ctx_.model.pairwise))
				return true;
		return false;
	}

	bool feasible(const std::vector<size_t> &kept, const Mask &a, const std::array<AtomRecord, 7> *bridge)
	{
		if (!ctx_.use_sc)
			return true;
		for (size_t i : kept)
		{
			if (bridge && near_clash(rot_[i].atoms, radius_[i], *bridge))
				continue;
			if (intersects(a, rotamer_mask(i)))
				return true;
		}
		return false;
	}

	double outer_rotamer_energy(size_t i)
	{
		if (!std::isnan(e_outer_[i]))
			return e_outer_[i];
		double e = kInf;
		if (!clash_outer_[i])
		{
			const auto &T = ctx_.model.pairwise;
			const auto &atoms = rot_[i].atoms;
			e = ctx_.field.energy(atoms);
			for (size_t k = 0; k < atoms.size() && !std::isinf(e); ++k)
			{
				e += pair_sum(atoms[k], parent_.sampled, T);
				e += pair_energy(T, atoms[k], outer_atom_);
				for (size_t j = k + 1; j < atoms.size(); ++j)
					e += pair_energy(T, atoms[k], atoms[j]);
			}
		}
		return e_outer_[i] = e;
	}

	/// β4-scaled ΔH of rotamer i against the template and every placed backbone atom.
	double inner_rotamer_energy(size_t i, std::span<const AtomRecord> in)
	{
		if (!ctx_.use_sc)
			return 0.0;
		double e = outer_rotamer_energy(i);
		for (auto &a : rot_[i].atoms)
		{
			if (std::isinf(e))
				break;
			e += pair_sum(a, in, ctx_.model.pairwise);
		}
		return ctx_.model.beta.beta4 * e;
	}

	double slot_energy(std::span<const AtomRecord> atoms, const RotamerSet &slot, const PlacedRotamer &rot) const
	{
		double reach = slot.radius + ctx_.model.pairwise.max_distance();
		double e = 0;
		for (auto &x : atoms)
		{
			if (distance2(x.pos, slot.center) > reach * reach)
				continue;
			e += pair_sum(x, rot.atoms, ctx_.model.pairwise);
			if (std::isinf(e))
				return kInf;
		}
		return e;
	}

	void build_child(Particle &c, const PlacedBackbone &placed, const std::array<AtomRecord, 3> &in, int phi_i,
	                 int psi_i, double omega, double dh, double logw, const std::vector<size_t> &kept,
	                 const BridgeInfo *bridge, double dhc, const std::array<AtomRecord, 7> *br, uint32_t cell,
	                 size_t sol)
	{
		const auto &ctx = ctx_;
		const auto &m = ctx.model;
		const int r = gs_.residue;
		const bool left = gs_.dir == Direction::left;
		c.bb = parent_.bb;
		c.dih = parent_.dih;
		c.cell = parent_.cell;
		c.sampled = parent_.sampled;
		c.slots = parent_.slots;
		c.increments = parent_.increments;
		c.left = parent_.left;
		c.right = parent_.right;
		c.weight = std::exp(logw);
		auto &D = c.dih[size_t(r)];
		D.phi = m.rama.angle(phi_i);
		D.psi = m.rama.angle(psi_i);
		c.cell[size_t(r)] = {phi_i, psi_i};
		if (left)
		{
			c.bb[size_t(r)][2] = placed.carbonyl_c;
			c.bb[size_t(r)][3] = placed.carbonyl_o;
			c.bb[size_t(r + 1)][0] = placed.amide_n;
			c.bb[size_t(r + 1)][1] = placed.alpha_c;
			D.omega = omega;
			c.left = r + 1;
		}
		else
		{
			c.bb[size_t(r)][0] = placed.amide_n;
			c.bb[size_t(r - 1)][2] = placed.carbonyl_c;
			c.bb[size_t(r - 1)][3] = placed.carbonyl_o;
			c.bb[size_t(r - 1)][1] = placed.alpha_c;
			c.dih[size_t(r - 1)].omega = omega;
			c.right = r - 1;
		}
		c.sampled.push_back(outer_atom_);
		c.sampled.insert(c.sampled.end(), in.begin(), in.end());
		c.increments.push_back(dh);

		std::vector<AtomRecord> new_bb{outer_atom_, in[0], in[1], in[2]};
		if (bridge)
		{
			const int a = ctx.bridge;
			const auto &s = *bridge->sol;
			c.bb[size_t(a)][2] = s.c0;
			c.bb[size_t(a)][3] = s.o0;
			c.bb[size_t(a + 1)] = {s.n1, s.ca1, s.c1, s.o1};
			c.bb[size_t(a + 2)][0] = s.n2;
			for (int k = 0; k < 3; ++k)
			{
				c.dih[size_t(a + k)].phi = s.dihedrals[size_t(2 * k)];
				c.dih[size_t(a + k)].psi = s.dihedrals[size_t(2 * k + 1)];
			}
			c.dih[size_t(a)].omega = bridge->omega[0];
			c.dih[size_t(a + 1)].omega = bridge->omega[1];
			c.sampled.insert(c.sampled.end(), br->begin(), br->end());
			new_bb.insert(new_bb.end(), br->begin(), br->end());
			c.increments.push_back(dhc);
			c.left = a;
			c.right = a + 2;
		}

		// new rotamer slot and joint candidates
		auto slot = std::make_shared<RotamerSet>();
		slot->residue = r;
		slot->center = res_ca_;
		for (size_t i : kept)
		{
			slot->rot.push_back(rot_[i]);
			slot->radius = std::max(slot->radius, radius_[i]);
		}
		const double b4 = m.beta.beta4;
		struct Combo
		{
			size_t joint, rot;
			double dh;
		};
		std::vector<Combo> combos;
		std::vector<double> xbb(parent_.joints.size(), 0.0);
		if (ctx.use_sc)
		{
			// new backbone against the stored side chains, per slot rotamer
			std::vector<std::vector<double>> per(parent_.slots.size());
			for (size_t k = 0; k < parent_.slots.size(); ++k)
				per[k].assign(parent_.slots[k]->rot.size(), std::numeric_limits<double>::quiet_NaN());
			for (size_t j = 0; j < parent_.joints.size(); ++j)
			{
				double e = 0;
				for (size_t k = 0; k < parent_.slots.size() && !std::isinf(e); ++k)
				{
					size_t pk = parent_.joints[j].pick[k];
					if (std::isnan(per[k][pk]))
						per[k][pk] = slot_energy(new_bb, *parent_.slots[k], parent_.slots[k]->rot[pk]);
					e += per[k][pk];
				}
				xbb[j] = b4 * e;
			}
		}
		for (size_t ki = 0; ki < kept.size(); ++ki)
		{
			size_t i = kept[ki];
			double er = 0, xbr = 0;
			std::vector<double> per_slot;
			if (ctx.use_sc)
			{
				er = inner_rotamer_energy(i, in);
				if (br)
				{
					double e = 0;
					for (auto &x : rot_[i].atoms)
						e += pair_sum(x, *br, m.pairwise);
					xbr = b4 * e;
				}
				if (std::isinf(er) || std::isinf(xbr))
					continue;
			}
			for (size_t j = 0; j < parent_.joints.size(); ++j)
			{
				if (std::isinf(xbb[j]))
					continue;
				double x = 0;
				if (ctx.use_sc)
				{
					RotamerSet self;
					self.center = res_ca_;
					self.radius = radius_[i];
					for (size_t k = 0; k < parent_.slots.size() && !std::isinf(x); ++k)
					{
						const auto &sk = *parent_.slots[k];
						const auto &pr = sk.rot[parent_.joints[j].pick[k]];
						// symmetric pair sum; cull with both spheres
						double reach = sk.radius + radius_[i] + m.pairwise.max_distance();
						if (distance2(sk.center, res_ca_) > reach * reach)
							continue;
						x += slot_energy(rot_[i].atoms, sk, pr);
					}
					x *= b4;
					if (std::isinf(x))
						continue;
				}
				combos.push_back({j, ki, parent_.joints[j].dh + er + xbb[j] + x + xbr});
			}
		}
		if (combos.empty())
			throw Error("internal: rebuilt particle has no side-chain candidate");
		std::vector<size_t> pick;
		if (combos.size() <= ctx.cfg.max_joints)
		{
			for (size_t q = 0; q < combos.size(); ++q)
				pick.push_back(q);
		}
		else
		{
			double emin = kInf;
			for (auto &cb : combos)
				emin = std::min(emin, cb.dh);
			std::vector<double> w(combos.size());
			for (size_t q = 0; q < combos.size(); ++q)
				w[q] = std::exp(-(combos[q].dh - emin));
			double us = make_stream(ctx.cfg.seed, StreamTag::joint_subset, uint64_t(step_), pid_,
			                        uint64_t(cell) * 32 + sol)
			                .uniform();
			pick = sample_capped(w, ctx.cfg.max_joints, us);
		}
		c.joints.clear();
		for (size_t q : pick)
		{
			Joint j = parent_.joints[combos[q].joint];
			j.pick.push_back(uint16_t(combos[q].rot));
			j.dh = combos[q].dh;
			c.joints.push_back(std::move(j));
		}
		c.slots.push_back(std::move(slot));
	}

	const Context &ctx_;
	const Particle &parent_;
	uint32_t pid_;
	int step_, outer_;
	GrowthStep gs_;
	GrowthFrame frame_;
	AtomRecord outer_atom_;
	Vec3 res_n_, res_ca_, res_c_;
	double e_outer_bb_ = 0;
	bool dead_ = false;
	bool need_energy_ = false;
	size_t joints_ = 0;
	std::vector<PlacedRotamer> rot_;
	std::vector<double> radius_, e_outer_, e_in_, wts_;
	std::vector<char> clash_outer_, finite_, b_done_, flags_;
	std::vector<Mask> b_mask_;
	Mask a_outer_;
	std::vector<size_t> kept_;
};

/// Particle holding only the anchors, with one empty joint.
inline Particle root_particle(const LoopProblem &prob)
{
	const int l = prob.length();
	const double nan = std::numeric_limits<double>::quiet_NaN();
	const Vec3 none(nan, nan, nan);
	Particle root;
	root.bb.assign(size_t(l), {none, none, none, none});
	root.dih.assign(size_t(l), {});
	root.cell.assign(size_t(l), {-1, -1});
	root.bb[0][0] = prob.n_first;
	root.bb[0][1] = prob.ca_first;
	if (prob.closed)
	{
		root.bb[size_t(l - 1)][1] = prob.ca_last;
		root.bb[size_t(l - 1)][2] = prob.c_last;
		root.bb[size_t(l - 1)][3] = prob.o_last;
	}
	root.left = 0;
	root.right = l - 1;
	root.joints = {Joint{}};
	root.weight = 1.0;
	return root;
}

inline int thread_count(const SamplerConfig &cfg)
{
#ifdef _OPENMP
	return cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#else
	(void)cfg;
	return 1;
#endif
}

/// Runs f(i) for i in [0, n) across threads; rethrows the lowest-index exception.
template <class F>
void parallel_for(size_t n, int threads, F &&f)
{
	std::vector<std::exception_ptr> errors(n);
	bool failed = false;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
	for (long long i = 0; i < (long long)n; ++i)
	{
		try
		{
			f(size_t(i));
		}
		catch (...)
		{
			errors[size_t(i)] = std::current_exception();
#pragma omp atomic write
			failed = true;
		}
	}
	if (failed)
		for (auto &e : errors)
			if (e)
				std::rethrow_exception(e);
}

/// Picks the stored joint and samples the bridge side chains.
inline std::optional<Conformation> finalize_particle(const Context &ctx, const Particle &p, uint32_t pid)
{
	const auto &m = ctx.model;
	const auto &T = m.pairwise;
	const int l = ctx.prob.length();
	std::vector<double> w(p.joints.size());
	double emin = kInf;
	for (auto &j : p.joints)
		emin = std::min(emin, j.dh);
	for (size_t q = 0; q < w.size(); ++q)
		w[q] = std::exp(-(p.joints[q].dh - emin));
	const Joint &joint = p.joints[sample_one(w, make_stream(ctx.cfg.seed, StreamTag::finalize, pid, 0).uniform())];

	Conformation c;
	c.start = ctx.prob.start;
	c.sequence = ctx.prob.sequence;
	c.dihedrals = p.dih;
	c.backbone = p.bb;
	c.bridge = ctx.bridge;
	c.chi.assign(size_t(l), {});
	c.side_chains.assign(size_t(l), {});
	std::vector<AtomRecord> placed;
	for (size_t k = 0; k < p.slots.size(); ++k)
	{
		const auto &slot = *p.slots[k];
		const auto &rot = slot.rot[joint.pick[k]];
		c.chi[size_t(slot.residue)].assign(rot.chi.begin(), rot.chi.begin() + chi_count(ctx.type(slot.residue)));
		for (auto &a : rot.atoms)
		{
			c.side_chains[size_t(slot.residue)].push_back(a.pos);
			placed.push_back(a);
		}
	}
	double sc_total = joint.dh;
	if (ctx.bridge >= 0)
	{
		for (int k = ctx.bridge; k < ctx.bridge + 3; ++k)
		{
			const auto &bb = p.bb[size_t(k)];
			auto rots = perturbed_rotamers(ctx, k, bb[0], bb[1], bb[2],
			                               make_stream(ctx.cfg.seed, StreamTag::chi, uint64_t(ctx.plan.size() + 1 + k),
			                                           pid, 0));
			std::vector<double> e(rots.size(), 0.0);
			double lo = kInf;
			for (size_t i = 0; i < rots.size(); ++i)
			{
				if (ctx.use_sc)
				{
					const auto &atoms = rots[i].atoms;
					double x = ctx.field.energy(atoms);
					for (size_t q = 0; q < atoms.size() && !std::isinf(x); ++q)
					{
						x += pair_sum(atoms[q], p.sampled, T);
						x += pair_sum(atoms[q], placed, T);
						for (size_t r = q + 1; r < atoms.size(); ++r)
							x += pair_energy(T, atoms[q], atoms[r]);
					}
					e[i] = m.beta.beta4 * x;
				}
				lo = std::min(lo, e[i]);
			}
			if (std::isinf(lo))
				return std::nullopt;
			std::vector<double> pw(rots.size());
			for (size_t i = 0; i < rots.size(); ++i)
				pw[i] = std::isinf(e[i]) ? 0.0 : std::exp(-(e[i] - lo));
			size_t pick = sample_one(pw, make_stream(ctx.cfg.seed, StreamTag::finalize, pid, uint64_t(1 + k)).uniform());
			sc_total += e[pick];
			c.chi[size_t(k)].assign(rots[pick].chi.begin(), rots[pick].chi.begin() + chi_count(ctx.type(k)));
			for (auto &a : rots[pick].atoms)
			{
				c.side_chains[size_t(k)].push_back(a.pos);
				placed.push_back(a);
			}
		}
	}
	c.increments = p.increments;
	c.increments.push_back(sc_total);
	double h = 0;
	for (double x : c.increments)
		h += x;
	c.energy = h;
	return c;
}

} // namespace detail

/// Runs the sampler. Throws ExtinctionError when every growth of a step is infeasible.
inline WeightedSample run_smc(const LoopProblem &prob, const EnergyModel &model, const SamplerConfig &cfg,
                              const std::string &label = "")
{
	using namespace detail;
	cfg.validate();
	model.beta.validate();
	if (prob.length() < 4)
		throw InvalidArgument("segment must contain at least 4 residues");
	if (model.rama.size() > 65535)
		throw InvalidArgument("grid too large");
	Context ctx(prob, model, cfg);
	const int l = prob.length();
	const int n = ctx.n;
	const int threads = thread_count(cfg);

	WeightedSample out;
	out.label = label;
	out.start = prob.start;
	out.sequence = prob.sequence_string();
	std::vector<Particle> pop{root_particle(prob)};

	for (int t = 0; t < int(ctx.plan.size()); ++t)
	{
		const GrowthStep gs = ctx.plan[size_t(t)];
		const size_t items = pop.size() * size_t(n);
		std::vector<std::vector<Candidate>> recs(items);
		std::vector<size_t> rejected(items, 0);
		parallel_for(items, threads, [&](size_t it) {
			uint32_t pid = uint32_t(it / size_t(n));
			int outer = int(it % size_t(n));
			StepEvaluator ev(ctx, pop[pid], pid, t, outer);
			for (int inner = 0; inner < n; ++inner)
				if (!ev.evaluate(inner, &recs[it]))
					++rejected[it];
		});
		std::vector<Candidate> all;
		size_t infeasible = 0;
		for (size_t it = 0; it < items; ++it)
		{
			all.insert(all.end(), recs[it].begin(), recs[it].end());
			infeasible += rejected[it];
			std::vector<Candidate>().swap(recs[it]);
		}
		StepRecord log;
		log.step = t + 1;
		log.direction = gs.dir == Direction::left ? 'L' : 'R';
		log.position = prob.start + gs.residue;
		log.parents = pop.size();
		log.candidates = items * size_t(n);
		log.infeasible = infeasible;
		log.intermediates = all.size();
		if (all.empty())
			throw ExtinctionError(t + 1, "no feasible growth for residue " + std::to_string(log.position) + " (" +
			                                 std::to_string(items) + " candidates from " +
			                                 std::to_string(pop.size()) + " particles)");
		double lmax = -kInf;
		for (auto &c : all)
			lmax = std::max(lmax, c.logw);
		std::vector<double> w(all.size());
		for (size_t i = 0; i < all.size(); ++i)
			w[i] = std::exp(all[i].logw - lmax);
		log.ess = effective_sample_size(w);
		Stream rs = make_stream(cfg.seed, StreamTag::resample, uint64_t(t));
		auto res = resample_optimal(w, cfg.particles, rs);

		// rebuild the survivors, grouped by (parent, outer) work item
		std::vector<size_t> group_start{0};
		for (size_t q = 1; q < res.index.size(); ++q)
			if (all[res.index[q]].item != all[res.index[q - 1]].item)
				group_start.push_back(q);
		group_start.push_back(res.index.size());
		std::vector<Particle> next(res.index.size());
		parallel_for(group_start.size() - 1, threads, [&](size_t gi) {
			size_t q0 = group_start[gi], q1 = group_start[gi + 1];
			const Candidate &c0 = all[res.index[q0]];
			uint32_t pid = c0.item / uint32_t(n);
			int outer = int(c0.item % uint32_t(n));
			StepEvaluator ev(ctx, pop[pid], pid, t, outer);
			for (size_t q = q0; q < q1; ++q)
			{
				const Candidate &c = all[res.index[q]];
				if (q > q0 && res.index[q] == res.index[q - 1])
				{
					next[q] = next[q - 1];
				}
				else if (!ev.evaluate(c.inner, nullptr, c.sol, &next[q]))
					throw Error("internal: survivor could not be rebuilt");
				next[q].weight = res.weight[q];
			}
		});
		double total = 0;
		for (auto &p : next)
			total += p.weight;
		for (auto &p : next)
			p.weight /= total;
		log.survivors = next.size();
		out.log.steps.push_back(log);
		pop = std::move(next);
	}

	std::vector<std::optional<Conformation>> fin(pop.size());
	parallel_for(pop.size(), threads, [&](size_t i) { fin[i] = finalize_particle(ctx, pop[i], uint32_t(i)); });
	out.log.finalized = pop.size();
	double total = 0;
	for (size_t i = 0; i < pop.size(); ++i)
		if (fin[i])
			total += pop[i].weight;
		else
			++out.log.zero_weight;
	if (!(total > 0))
		throw ExtinctionError(int(ctx.plan.size()) + 1, "every particle failed side-chain completion");
	for (size_t i = 0; i < pop.size(); ++i)
		if (fin[i])
		{
			Conformation c = std::move(*fin[i]);
			c.id = i;
			c.label = label;
			c.weight = pop[i].weight / total;
			out.conformations.push_back(std::move(c));
		}
	return out;
}

struct EnergyBreakdown
{
	double dihedral = 0, backbone = 0, sidechain = 0; // unscaled D, B, S
	double total = 0;                                 // β1·D + β2·B + β4·S (zero β drops its term)
};

/// H of a complete conformation, recomputed from scratch (all pairs, no spatial index).
inline EnergyBreakdown energy_breakdown(const Conformation &c, const LoopProblem &prob, const EnergyModel &model)
{
	const int l = prob.length();
	if (int(c.sequence.size()) != l || c.sequence != prob.sequence || c.start != prob.start)
		throw InvalidArgument("conformation does not match the loop problem");
	const auto &T = model.pairwise;
	EnergyBreakdown b;
	for (int k = 0; k < l; ++k)
	{
		const auto &d = c.dihedrals[size_t(k)];
		AminoAcid t = c.sequence[size_t(k)];
		if (d.phi && d.psi)
		{
			bool bridged = c.bridge >= 0 && k >= c.bridge && k < c.bridge + 3;
			if (!bridged)
				b.dihedral += model.rama.rama_term(t, *d.phi, *d.psi);
			else if (model.charge_closure_dihedrals)
				b.dihedral += model.rama.binned_term(t, *d.phi, *d.psi);
		}
		if (d.omega && k + 1 < l)
			b.dihedral -= model.omega.logdensity(c.sequence[size_t(k + 1)], *d.omega);
	}
	auto rec = [&](const Vec3 &p, int k, int topo) {
		AminoAcid aa = c.sequence[size_t(k)];
		return AtomRecord{p, topology(aa).atom_element(size_t(topo)), aa, uint8_t(topo), prob.start + k};
	};
	std::vector<AtomRecord> bb, sc;
	for (int k = 0; k < l; ++k)
		for (int a = 0; a < 4; ++a)
		{
			bool anchored = (k == 0 && a < 2) || (prob.closed && k == l - 1 && a >= 1);
			const Vec3 &p = c.backbone[size_t(k)][size_t(a)];
			if (!anchored && p.finite())
				bb.push_back(rec(p, k, a));
		}
	for (int k = 0; k < l && k < int(c.side_chains.size()); ++k)
		for (size_t a = 0; a < c.side_chains[size_t(k)].size(); ++a)
			sc.push_back(rec(c.side_chains[size_t(k)][a], k, int(4 + a)));
	if (model.beta.beta2 != 0)
		b.backbone = interaction_energy(bb, prob.fixed, T) + self_interaction_energy(bb, T);
	if (model.beta.beta4 != 0)
		b.sidechain = interaction_energy(sc, prob.fixed, T) + interaction_energy(sc, bb, T) +
		              self_interaction_energy(sc, T);
	if (model.beta.beta1 != 0)
		b.total += model.beta.beta1 * b.dihedral;
	if (model.beta.beta2 != 0)
		b.total += model.beta.beta2 * b.backbone;
	if (model.beta.beta4 != 0)
		b.total += model.beta.beta4 * b.sidechain;
	return b;
}

inline double total_energy(const Conformation &c, const LoopProblem &prob, const EnergyModel &model)
{
	return energy_breakdown(c, prob, model).total;
}

} // namespace loopsmc
