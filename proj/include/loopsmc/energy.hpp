#pragma once

// Energy function: dihedral statistics, rotamers, pairwise atom interactions.
//
// H(x) = β1·Σ[-log p(φ,ψ) - log p(ω)] + β2·f(backbone) - β3·log p(χ) + β4·f(side chains)
// with p(χ) uniform over the rotamer list. Infinite energy marks infeasible states.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "loopsmc/checksum.hpp"
#include "loopsmc/error.hpp"
#include "loopsmc/geometry.hpp"
#include "loopsmc/residue.hpp"
#include "loopsmc/template_io.hpp"

namespace loopsmc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

inline std::vector<std::string> split_tabs(const std::string &line)
{
	std::vector<std::string> out;
	size_t a = 0;
	while (true)
	{
		size_t b = line.find('\t', a);
		out.push_back(trim(line.substr(a, b == std::string::npos ? std::string::npos : b - a)));
		if (b == std::string::npos)
			break;
		a = b + 1;
	}
	return out;
}

inline double to_real(const std::string &s, const std::string &ctx)
{
	try
	{
		size_t pos = 0;
		double v = std::stod(s, &pos);
		if (pos != s.size())
			throw std::invalid_argument(s);
		return v;
	}
	catch (const std::exception &)
	{
		throw DataError(ctx + ": bad number '" + s + "'");
	}
}

/// Shortest text that reads back to exactly `v`.
inline std::string fmt_real(double v)
{
	char buf[40];
	auto r = std::to_chars(buf, buf + sizeof buf, v);
	return std::string(buf, r.ptr);
}

/// Value of `key=` in a header line such as "#loopsmc-rama\tspacing=5\tcutoff=2e-05".
inline std::optional<std::string> header_value(const std::string &line, const std::string &key)
{
	for (auto &tok : split_tabs(line))
		if (tok.rfind(key + "=", 0) == 0)
			return tok.substr(key.size() + 1);
	return std::nullopt;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Ramachandran grid

class RamachandranGrid
{
  public:
	/// Uniform probabilities on an n×n grid.
	static RamachandranGrid uniform(int n = 72, double cutoff = 2e-5)
	{
		RamachandranGrid g;
		g.n_ = n;
		g.cutoff_ = cutoff;
		for (auto &p : g.prob_)
			p.assign(size_t(n) * size_t(n), 1.0 / double(n * n));
		g.finalize();
		return g;
	}

	/// Builds from explicit per-type tables (row-major, φ index major).
	static RamachandranGrid from_tables(int n, const std::array<std::vector<double>, kNumAminoAcids> &p,
	                                    double cutoff = 2e-5)
	{
		RamachandranGrid g;
		g.n_ = n;
		g.cutoff_ = cutoff;
		g.prob_ = p;
		g.finalize();
		return g;
	}

	int size() const { return n_; }
	int cells() const { return n_ * n_; }
	double spacing() const { return 360.0 / n_; }
	double cutoff() const { return cutoff_; }

	/// Grid angle of an index: -180 + idx·spacing.
	double angle(int idx) const { return -180.0 + idx * spacing(); }

	/// Index of an on-grid angle (either representation of ±180 accepted).
	std::optional<int> index_of(double a) const
	{
		double x = (a + 180.0) / spacing();
		double r = std::round(x);
		if (std::abs(x - r) > 1e-6)
			return std::nullopt;
		int i = int(r) % n_;
		if (i < 0)
			i += n_;
		return i;
	}

	int nearest_index(double a) const
	{
		int i = int(std::lround((wrap_degrees(a) + 180.0) / spacing())) % n_;
		return i < 0 ? i + n_ : i;
	}

	double probability(AminoAcid t, int i, int j) const { return prob_[size_t(t)][size_t(i * n_ + j)]; }

	/// -log p, or +∞ below the cutoff.
	double term_by_index(AminoAcid t, int i, int j) const { return energy_[size_t(t)][size_t(i * n_ + j)]; }

	/// Defined only on grid cells; throws InvalidArgument off-grid.
	double rama_term(AminoAcid t, double phi, double psi) const
	{
		auto i = index_of(phi), j = index_of(psi);
		if (!i || !j)
			throw InvalidArgument("rama_term: (" + std::to_string(phi) + ", " + std::to_string(psi) +
			                      ") is not on the grid");
		return term_by_index(t, *i, *j);
	}

	/// Value of the cell containing (φ, ψ); used for dihedrals set by loop closure.
	double binned_term(AminoAcid t, double phi, double psi) const
	{
		return term_by_index(t, nearest_index(phi), nearest_index(psi));
	}

	void write(std::ostream &os) const
	{
		os << "#loopsmc-rama\tspacing=" << detail::fmt_real(spacing()) << "\tcutoff=" << detail::fmt_real(cutoff_)
		   << "\n";
		os << "type\tphi_index\tpsi_index\tprobability\n";
		for (int t = 0; t < kNumAminoAcids; ++t)
			for (int i = 0; i < n_; ++i)
				for (int j = 0; j < n_; ++j)
					os << three_letter(AminoAcid(t)) << '\t' << i << '\t' << j << '\t'
					   << detail::fmt_real(prob_[size_t(t)][size_t(i * n_ + j)]) << '\n';
	}

	static RamachandranGrid parse(std::istream &in)
	{
		std::string line;
		if (!std::getline(in, line) || line.rfind("#loopsmc-rama", 0) != 0)
			throw DataError("Ramachandran file: missing '#loopsmc-rama' header line");
		auto sp = detail::header_value(line, "spacing");
		if (!sp)
			throw DataError("Ramachandran file: header lacks spacing=");
		double spacing = detail::to_real(*sp, "Ramachandran header");
		int n = int(std::lround(360.0 / spacing));
		if (n < 1 || std::abs(n * spacing - 360.0) > 1e-9)
			throw DataError("Ramachandran file: spacing must divide 360");
		double cutoff = 2e-5;
		if (auto c = detail::header_value(line, "cutoff"))
			cutoff = detail::to_real(*c, "Ramachandran header");
		RamachandranGrid g;
		g.n_ = n;
		g.cutoff_ = cutoff;
		std::array<std::vector<char>, kNumAminoAcids> seen;
		for (int t = 0; t < kNumAminoAcids; ++t)
		{
			g.prob_[size_t(t)].assign(size_t(n * n), 0.0);
			seen[size_t(t)].assign(size_t(n * n), 0);
		}
		int lineno = 1;
		while (std::getline(in, line))
		{
			++lineno;
			if (line.empty() || line[0] == '#' || line.rfind("type\t", 0) == 0)
				continue;
			std::string ctx = "Ramachandran file line " + std::to_string(lineno);
			auto f = detail::split_tabs(line);
			if (f.size() != 4)
				throw DataError(ctx + ": expected 4 tab-separated fields");
			auto t = from_three_letter(f[0]);
			if (!t)
				throw DataError(ctx + ": unknown residue type " + f[0]);
			int i = int(detail::to_real(f[1], ctx)), j = int(detail::to_real(f[2], ctx));
			if (i < 0 || i >= n || j < 0 || j >= n)
				throw DataError(ctx + ": grid index out of range");
			double p = detail::to_real(f[3], ctx);
			if (!(p >= 0) || !std::isfinite(p))
				throw DataError(ctx + ": probability must be finite and non-negative");
			size_t k = size_t(i * n + j);
			if (seen[size_t(*t)][k])
				throw DataError(ctx + ": duplicate cell");
			seen[size_t(*t)][k] = 1;
			g.prob_[size_t(*t)][k] = p;
		}
		for (int t = 0; t < kNumAminoAcids; ++t)
			if (std::count(seen[size_t(t)].begin(), seen[size_t(t)].end(), 1) != n * n)
				throw DataError(std::string("Ramachandran file: incomplete table for ") + three_letter(AminoAcid(t)));
		g.finalize();
		return g;
	}

	static RamachandranGrid load(const std::string &path)
	{
		std::ifstream in(path);
		if (!in)
			throw DataError("cannot open Ramachandran file " + path);
		return parse(in);
	}

  private:
	void finalize()
	{
		for (int t = 0; t < kNumAminoAcids; ++t)
		{
			auto &p = prob_[size_t(t)];
			if (p.size() != size_t(n_ * n_))
				throw DataError("Ramachandran table has the wrong cell count");
			double s = 0;
			for (double v : p)
			{
				if (!(v >= 0) || !std::isfinite(v))
					throw DataError("Ramachandran probabilities must be finite and non-negative");
				s += v;
			}
			if (std::abs(s - 1.0) > 1e-6)
				throw DataError(std::string("Ramachandran table for ") + three_letter(AminoAcid(t)) +
				                " sums to " + std::to_string(s) + ", not 1");
			auto &e = energy_[size_t(t)];
			e.resize(p.size());
			for (size_t k = 0; k < p.size(); ++k)
				e[k] = (p[k] < cutoff_ || p[k] <= 0) ? kInf : -std::log(p[k]);
		}
	}

	int n_ = 72;
	double cutoff_ = 2e-5;
	std::array<std::vector<double>, kNumAminoAcids> prob_, energy_;
};

// ---------------------------------------------------------------------------
// ω density

struct OmegaModel
{
	double mean = 180.0;
	double sd = 2.75;
	double proline_cis_fraction = 0.1; // weight of the 0° component for proline

	/// Log density on the circle; the type is that of the residue following the peptide bond.
	double logdensity(AminoAcid following, double omega) const
	{
		auto normal = [&](double mu) {
			double z = angle_distance(omega, mu) / sd;
			return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * kPi));
		};
		if (following == AminoAcid::PRO)
			return std::log((1.0 - proline_cis_fraction) * normal(mean) + proline_cis_fraction * normal(mean - 180.0));
		double z = angle_distance(omega, mean) / sd;
		return -0.5 * z * z - std::log(sd * std::sqrt(2.0 * kPi));
	}

	double mode(AminoAcid) const { return wrap_degrees(mean); }

	bool cis_possible(AminoAcid following) const
	{
		return following == AminoAcid::PRO && proline_cis_fraction > 0;
	}

	/// Draws ω given a uniform u1 (component choice) and a standard normal z.
	double draw(AminoAcid following, double u1, double z) const
	{
		double mu = mean;
		if (following == AminoAcid::PRO && u1 < proline_cis_fraction)
			mu = mean - 180.0;
		return wrap_degrees(mu + sd * z);
	}
};

// ---------------------------------------------------------------------------
// Rotamers

struct Rotamer
{
	std::array<double, 4> chi{};
	double probability = 1.0;
};

class RotamerLibrary
{
  public:
	double chi1_sd = 10.0; // sd of the Normal perturbation applied to χ1

	const std::vector<Rotamer> &rotamers(AminoAcid t) const { return lib_[size_t(t)]; }

	void set(AminoAcid t, std::vector<Rotamer> r) { lib_[size_t(t)] = std::move(r); }

	void validate() const
	{
		for (int t = 0; t < kNumAminoAcids; ++t)
		{
			auto a = AminoAcid(t);
			int nchi = chi_count(a);
			if (nchi == 0)
			{
				if (lib_[size_t(t)].size() != 1)
					throw DataError(std::string("rotamer library: ") + three_letter(a) +
					                " must have exactly one (empty) rotamer");
				continue;
			}
			if (lib_[size_t(t)].empty())
				throw DataError(std::string("rotamer library: no rotamers for ") + three_letter(a));
			for (auto &r : lib_[size_t(t)])
				for (int k = 0; k < nchi; ++k)
					if (!(r.chi[size_t(k)] > -180.0 && r.chi[size_t(k)] <= 180.0))
						throw DataError(std::string("rotamer library: χ out of (-180, 180] for ") + three_letter(a));
		}
	}

	void write(std::ostream &os) const
	{
		os << "#loopsmc-rotamers\tchi1_sd=" << detail::fmt_real(chi1_sd) << "\n";
		os << "type\trotamer_index\tchi1\tchi2\tchi3\tchi4\tprobability\n";
		for (int t = 0; t < kNumAminoAcids; ++t)
		{
			auto a = AminoAcid(t);
			int nchi = chi_count(a);
			if (nchi == 0)
				continue;
			const auto &rs = lib_[size_t(t)];
			for (size_t i = 0; i < rs.size(); ++i)
			{
				os << three_letter(a) << '\t' << i;
				for (int k = 0; k < 4; ++k)
				{
					os << '\t';
					if (k < nchi)
						os << detail::fmt_real(rs[i].chi[size_t(k)]);
				}
				os << '\t' << detail::fmt_real(rs[i].probability) << '\n';
			}
		}
	}

	static RotamerLibrary parse(std::istream &in)
	{
		RotamerLibrary lib;
		std::string line;
		int lineno = 0;
		std::array<std::vector<std::pair<int, Rotamer>>, kNumAminoAcids> rows;
		while (std::getline(in, line))
		{
			++lineno;
			if (line.rfind("#loopsmc-rotamers", 0) == 0)
			{
				if (auto v = detail::header_value(line, "chi1_sd"))
					lib.chi1_sd = detail::to_real(*v, "rotamer header");
				continue;
			}
			if (line.empty() || line[0] == '#' || line.rfind("type\t", 0) == 0)
				continue;
			std::string ctx = "rotamer file line " + std::to_string(lineno);
			auto f = detail::split_tabs(line);
			if (f.size() != 7)
				throw DataError(ctx + ": expected 7 tab-separated fields");
			auto t = from_three_letter(f[0]);
			if (!t)
				throw DataError(ctx + ": unknown residue type " + f[0]);
			int nchi = chi_count(*t);
			if (nchi == 0)
				throw DataError(ctx + ": " + f[0] + " has no side-chain dihedrals");
			Rotamer r;
			for (int k = 0; k < 4; ++k)
			{
				const auto &s = f[size_t(2 + k)];
				if (k < nchi)
				{
					if (s.empty())
						throw DataError(ctx + ": missing chi" + std::to_string(k + 1));
					r.chi[size_t(k)] = wrap_degrees(detail::to_real(s, ctx));
				}
				else if (!s.empty())
					throw DataError(ctx + ": " + f[0] + " has only " + std::to_string(nchi) + " chi angles");
			}
			r.probability = f[6].empty() ? 1.0 : detail::to_real(f[6], ctx);
			rows[size_t(*t)].push_back({int(detail::to_real(f[1], ctx)), r});
		}
		for (int t = 0; t < kNumAminoAcids; ++t)
		{
			auto &v = rows[size_t(t)];
			std::stable_sort(v.begin(), v.end(), [](auto &a, auto &b) { return a.first < b.first; });
			for (auto &[i, r] : v)
				lib.lib_[size_t(t)].push_back(r);
			if (chi_count(AminoAcid(t)) == 0)
				lib.lib_[size_t(t)] = {Rotamer{}};
		}
		lib.validate();
		return lib;
	}

	static RotamerLibrary load(const std::string &path)
	{
		std::ifstream in(path);
		if (!in)
			throw DataError("cannot open rotamer file " + path);
		return parse(in);
	}

  private:
	std::array<std::vector<Rotamer>, kNumAminoAcids> lib_;
};

// ---------------------------------------------------------------------------
// Pairwise table

class PairwiseTable
{
  public:
	/// Energy of a pair at distance d: +∞ inside the clash region, 0 beyond the last bin.
	double lookup(Element a, Element b, double d) const
	{
		if (d >= max_distance_)
			return 0.0;
		int bin = int(d * inv_width_);
		if (bin < 0)
			return kInf;
		return table_[index(a, b)][size_t(bin)];
	}

	/// Whether a pair at squared distance d2 falls in an infinite bin (same arithmetic as lookup).
	bool clashes(Element a, Element b, double d2) const
	{
		if (d2 >= guard2_[index(a, b)])
			return false;
		return std::isinf(lookup(a, b, std::sqrt(d2)));
	}

	/// Largest distance at which any pair can clash.
	double clash_reach() const
	{
		double g = 0;
		for (double x : guard2_)
			g = std::max(g, x);
		return std::sqrt(g);
	}

	double max_distance() const { return max_distance_; }
	double bin_width() const { return width_; }
	int bins() const { return int(table_[0].size()); }
	double value(Element a, Element b, int bin) const { return table_[index(a, b)][size_t(bin)]; }

	/// Uniform bins over [0, max_distance) with a value per element pair and bin.
	static PairwiseTable from_function(double width, double max_distance,
	                                   const std::function<double(Element, Element, double, double)> &f)
	{
		PairwiseTable t;
		t.width_ = width;
		t.inv_width_ = 1.0 / width;
		int nb = int(std::lround(max_distance / width));
		t.max_distance_ = nb * width;
		for (int a = 0; a < kNumElements; ++a)
			for (int b = 0; b < kNumElements; ++b)
			{
				auto &v = t.table_[size_t(a * kNumElements + b)];
				v.resize(size_t(nb));
				for (int k = 0; k < nb; ++k)
					v[size_t(k)] = f(Element(std::min(a, b)), Element(std::max(a, b)), k * width, (k + 1) * width);
			}
		t.finish();
		return t;
	}

	void write(std::ostream &os) const
	{
		os << "#loopsmc-pairwise\tbin_width=" << detail::fmt_real(width_)
		   << "\tmax_distance=" << detail::fmt_real(max_distance_) << "\n";
		os << "atom_type_a\tatom_type_b\tbin_low\tbin_high\tenergy\n";
		char lo[32], hi[32];
		for (int a = 0; a < kNumElements; ++a)
			for (int b = a; b < kNumElements; ++b)
				for (int k = 0; k < bins(); ++k)
				{
					std::snprintf(lo, sizeof lo, "%.4f", k * width_);
					std::snprintf(hi, sizeof hi, "%.4f", (k + 1) * width_);
					double e = value(Element(a), Element(b), k);
					os << kElementNames[size_t(a)] << '\t' << kElementNames[size_t(b)] << '\t' << lo << '\t' << hi
					   << '\t' << (std::isinf(e) ? std::string("INF") : detail::fmt_real(e)) << '\n';
				}
	}

	static PairwiseTable parse(std::istream &in)
	{
		struct Row
		{
			double lo, hi, e;
		};
		std::map<std::pair<int, int>, std::vector<Row>> rows;
		std::string line;
		int lineno = 0;
		while (std::getline(in, line))
		{
			++lineno;
			if (line.empty() || line[0] == '#' || line.rfind("atom_type_a", 0) == 0)
				continue;
			std::string ctx = "pairwise file line " + std::to_string(lineno);
			auto f = detail::split_tabs(line);
			if (f.size() != 5)
				throw DataError(ctx + ": expected 5 tab-separated fields");
			auto a = element_from_name(f[0]), b = element_from_name(f[1]);
			if (!a || !b)
				throw DataError(ctx + ": unknown atom type (expected C, N, O or S)");
			Row r{detail::to_real(f[2], ctx), detail::to_real(f[3], ctx), 0};
			if (f[4] == "INF" || f[4] == "inf")
				r.e = kInf;
			else
			{
				r.e = detail::to_real(f[4], ctx);
				if (!std::isfinite(r.e))
					throw DataError(ctx + ": energies must be finite or INF");
			}
			int x = int(*a), y = int(*b);
			rows[{std::min(x, y), std::max(x, y)}].push_back(r);
		}
		if (rows.empty())
			throw DataError("pairwise file: no rows");
		PairwiseTable t;
		bool first = true;
		for (int a = 0; a < kNumElements; ++a)
			for (int b = a; b < kNumElements; ++b)
			{
				auto it = rows.find({a, b});
				if (it == rows.end())
					throw DataError(std::string("pairwise file: no rows for pair ") + kElementNames[size_t(a)] + "-" +
					                kElementNames[size_t(b)]);
				auto v = it->second;
				std::sort(v.begin(), v.end(), [](const Row &x, const Row &y) { return x.lo < y.lo; });
				double w = v[0].hi - v[0].lo;
				if (std::abs(v[0].lo) > 1e-9 || !(w > 0))
					throw DataError("pairwise file: bins must start at 0 with positive width");
				for (size_t k = 0; k < v.size(); ++k)
					if (std::abs(v[k].lo - k * w) > 1e-6 || std::abs(v[k].hi - (k + 1) * w) > 1e-6)
						throw DataError("pairwise file: bins must be contiguous with uniform width");
				if (first)
				{
					t.width_ = w;
					t.inv_width_ = 1.0 / w;
					t.max_distance_ = double(v.size()) * w;
					first = false;
				}
				else if (std::abs(w - t.width_) > 1e-9 || std::abs(double(v.size()) * w - t.max_distance_) > 1e-6)
					throw DataError("pairwise file: all pairs must share one bin layout");
				std::vector<double> e;
				for (auto &r : v)
					e.push_back(r.e);
				t.table_[size_t(a * kNumElements + b)] = e;
				t.table_[size_t(b * kNumElements + a)] = e;
			}
		t.finish();
		return t;
	}

	static PairwiseTable load(const std::string &path)
	{
		std::ifstream in(path);
		if (!in)
			throw DataError("cannot open pairwise file " + path);
		return parse(in);
	}

  private:
	static size_t index(Element a, Element b) { return size_t(int(a) * kNumElements + int(b)); }

	void finish()
	{
		for (size_t k = 0; k < table_.size(); ++k)
		{
			int last = -1;
			for (size_t b = 0; b < table_[k].size(); ++b)
				if (std::isinf(table_[k][b]))
					last = int(b);
			double g = (last + 1) * width_ * (1.0 + 1e-9) + 1e-12;
			guard2_[k] = last < 0 ? 0.0 : g * g;
		}
	}

	double width_ = 0.05, inv_width_ = 20.0, max_distance_ = 0.0; // empty table: no interactions
	std::array<std::vector<double>, kNumElements * kNumElements> table_;
	std::array<double, kNumElements * kNumElements> guard2_{};
};

// ---------------------------------------------------------------------------
// Model

struct Coefficients
{
	double beta1 = 1.0, beta2 = 0.1, beta3 = 1.0, beta4 = 0.1;

	void validate() const
	{
		for (double b : {beta1, beta2, beta3, beta4})
			if (!(b >= 0) || !std::isfinite(b))
				throw InvalidArgument("energy coefficients must be finite and non-negative");
	}

	Coefficients scaled(double c) const { return {beta1 * c, beta2 * c, beta3 * c, beta4 * c}; }
};

struct EnergyModel
{
	IdealGeometry geometry;
	RamachandranGrid rama = RamachandranGrid::uniform();
	OmegaModel omega;
	RotamerLibrary rotamers;
	PairwiseTable pairwise;
	Coefficients beta;
	/// Charge -β1·log p(φ,ψ) for the six dihedrals fixed by loop closure.
	bool charge_closure_dihedrals = true;
	/// File name → SHA-256 of every data file the model was loaded from.
	std::map<std::string, std::string> checksums;

	/// Loads rama.tsv, rotamers.tsv, pairwise.tsv and (optionally) geometry.txt from a directory.
	static EnergyModel load_dir(const std::string &dir)
	{
		EnergyModel m;
		auto path = [&](const char *f) { return dir + "/" + f; };
		auto text = [&](const char *f) {
			std::string s = read_file(path(f));
			m.checksums[f] = sha256_hex(s);
			return s;
		};
		{
			std::istringstream in(text("rama.tsv"));
			m.rama = RamachandranGrid::parse(in);
		}
		{
			std::istringstream in(text("rotamers.tsv"));
			m.rotamers = RotamerLibrary::parse(in);
		}
		{
			std::istringstream in(text("pairwise.tsv"));
			m.pairwise = PairwiseTable::parse(in);
		}
		if (std::ifstream(path("geometry.txt")))
		{
			std::istringstream in(text("geometry.txt"));
			m.geometry = IdealGeometry::parse(in);
		}
		return m;
	}

	/// β1·(-log p(φ,ψ) - log p(ω)) for an on-grid (φ, ψ).
	double dihedral_term(AminoAcid residue, AminoAcid following, double phi, double psi, double omega_deg) const
	{
		if (beta.beta1 == 0)
			return 0.0;
		return beta.beta1 * (rama.rama_term(residue, phi, psi) - omega.logdensity(following, omega_deg));
	}
};

// ---------------------------------------------------------------------------
// Pair interactions

/// Whether the pair contributes to the interaction energy: atoms separated by
/// three or fewer covalent bonds are excluded.
inline bool counted_pair(const AtomRecord &a, const AtomRecord &b)
{
	if (a.resnum == b.resnum)
	{
		if (a.aa != b.aa)
			return true; // different residues sharing a number cannot happen in a template
		return topology(a.aa).graph_distance[a.topo][b.topo] > 3;
	}
	const AtomRecord &lo = a.resnum < b.resnum ? a : b;
	const AtomRecord &hi = a.resnum < b.resnum ? b : a;
	if (hi.resnum - lo.resnum != 1)
		return true;
	int d = topology(lo.aa).dist_to_c[lo.topo] + 1 + topology(hi.aa).dist_to_n[hi.topo];
	return d > 3;
}

inline double pair_energy(const PairwiseTable &t, const AtomRecord &a, const AtomRecord &b)
{
	double d2 = distance2(a.pos, b.pos);
	double m = t.max_distance();
	if (d2 >= m * m || !counted_pair(a, b))
		return 0.0;
	return t.lookup(a.element, b.element, std::sqrt(d2));
}

/// Σ over cross pairs (new × context); +∞ if any pair clashes. Brute force.
inline double interaction_energy(std::span<const AtomRecord> new_atoms, std::span<const AtomRecord> context,
                                 const PairwiseTable &t)
{
	double e = 0;
	for (auto &a : new_atoms)
		for (auto &b : context)
		{
			e += pair_energy(t, a, b);
			if (std::isinf(e))
				return kInf;
		}
	return e;
}

/// Σ over unordered pairs within one set.
inline double self_interaction_energy(std::span<const AtomRecord> atoms, const PairwiseTable &t)
{
	double e = 0;
	for (size_t i = 0; i < atoms.size(); ++i)
		for (size_t j = i + 1; j < atoms.size(); ++j)
		{
			e += pair_energy(t, atoms[i], atoms[j]);
			if (std::isinf(e))
				return kInf;
		}
	return e;
}

/// Uniform-cell spatial index over a fixed atom set.
class NeighborGrid
{
  public:
	NeighborGrid() = default;

	NeighborGrid(std::vector<AtomRecord> atoms, double cell) : atoms_(std::move(atoms)), cell_(cell)
	{
		if (atoms_.empty())
			return;
		lo_ = hi_ = atoms_[0].pos;
		for (auto &a : atoms_)
		{
			lo_ = {std::min(lo_.x, a.pos.x), std::min(lo_.y, a.pos.y), std::min(lo_.z, a.pos.z)};
			hi_ = {std::max(hi_.x, a.pos.x), std::max(hi_.y, a.pos.y), std::max(hi_.z, a.pos.z)};
		}
		for (int k = 0; k < 3; ++k)
			dims_[size_t(k)] = int(std::floor(((&hi_.x)[k] - (&lo_.x)[k]) / cell_)) + 1;
		std::vector<uint32_t> count(size_t(dims_[0]) * size_t(dims_[1]) * size_t(dims_[2]) + 1, 0);
		std::vector<size_t> cell_of(atoms_.size());
		for (size_t i = 0; i < atoms_.size(); ++i)
		{
			cell_of[i] = cell_index(atoms_[i].pos);
			++count[cell_of[i] + 1];
		}
		for (size_t c = 1; c < count.size(); ++c)
			count[c] += count[c - 1];
		start_ = count;
		order_.resize(atoms_.size());
		for (size_t i = 0; i < atoms_.size(); ++i)
			order_[count[cell_of[i]]++] = uint32_t(i);
		// store atoms contiguously by cell for locality
		std::vector<AtomRecord> sorted(atoms_.size());
		for (size_t i = 0; i < order_.size(); ++i)
			sorted[i] = atoms_[order_[i]];
		atoms_ = std::move(sorted);
	}

	const std::vector<AtomRecord> &atoms() const { return atoms_; }

	/// Calls f(atom) for every atom within `radius` of p (plus some beyond it).
	template <class F>
	void for_each_candidate(const Vec3 &p, double radius, F &&f) const
	{
		if (atoms_.empty())
			return;
		int lo[3], hi[3];
		for (int k = 0; k < 3; ++k)
		{
			double x = (&p.x)[k] - (&lo_.x)[k];
			lo[k] = std::max(0, int(std::floor((x - radius) / cell_)));
			hi[k] = std::min(dims_[size_t(k)] - 1, int(std::floor((x + radius) / cell_)));
			if (lo[k] > hi[k])
				return;
		}
		for (int x = lo[0]; x <= hi[0]; ++x)
			for (int y = lo[1]; y <= hi[1]; ++y)
			{
				size_t base = (size_t(x) * size_t(dims_[1]) + size_t(y)) * size_t(dims_[2]);
				size_t b = start_[base + size_t(lo[2])], e = start_[base + size_t(hi[2]) + 1];
				for (size_t i = b; i < e; ++i)
					f(atoms_[i]);
			}
	}

  private:
	size_t cell_index(const Vec3 &p) const
	{
		int c[3];
		for (int k = 0; k < 3; ++k)
			c[k] = std::clamp(int(std::floor(((&p.x)[k] - (&lo_.x)[k]) / cell_)), 0, dims_[size_t(k)] - 1);
		return (size_t(c[0]) * size_t(dims_[1]) + size_t(c[1])) * size_t(dims_[2]) + size_t(c[2]);
	}

	std::vector<AtomRecord> atoms_;
	std::vector<uint32_t> order_, start_;
	double cell_ = 3.0;
	Vec3 lo_, hi_;
	std::array<int, 3> dims_{1, 1, 1};
};

/// Interaction of single atoms with the fixed template, accelerated by a neighbor grid.
class TemplateField
{
  public:
	TemplateField() = default;

	TemplateField(std::vector<AtomRecord> fixed, const PairwiseTable *table)
		: grid_(std::move(fixed), std::max(2.0, table->max_distance() / 2.0)), table_(table),
		  reach_(table->clash_reach())
	{
	}

	double atom_energy(const AtomRecord &a) const
	{
		double e = 0;
		const double m2 = table_->max_distance() * table_->max_distance();
		bool clash = false;
		grid_.for_each_candidate(a.pos, table_->max_distance(), [&](const AtomRecord &b) {
			if (clash)
				return;
			double d2 = distance2(a.pos, b.pos);
			if (d2 >= m2 || !counted_pair(a, b))
				return;
			double v = table_->lookup(a.element, b.element, std::sqrt(d2));
			if (std::isinf(v))
				clash = true;
			else
				e += v;
		});
		return clash ? kInf : e;
	}

	bool atom_clashes(const AtomRecord &a) const
	{
		bool clash = false;
		grid_.for_each_candidate(a.pos, reach_, [&](const AtomRecord &b) {
			if (!clash && table_->clashes(a.element, b.element, distance2(a.pos, b.pos)) && counted_pair(a, b))
				clash = true;
		});
		return clash;
	}

	double energy(std::span<const AtomRecord> atoms) const
	{
		double e = 0;
		for (auto &a : atoms)
		{
			e += atom_energy(a);
			if (std::isinf(e))
				return kInf;
		}
		return e;
	}

	const std::vector<AtomRecord> &atoms() const { return grid_.atoms(); }
	const PairwiseTable &table() const { return *table_; }

  private:
	NeighborGrid grid_;
	const PairwiseTable *table_ = nullptr;
	double reach_ = 0;
};

} // namespace loopsmc
