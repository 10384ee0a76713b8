#pragma once

// Stand-in data tables: Lennard-Jones pairwise energies, a small rotamer
// library and Ramachandran estimation from a structure corpus.

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "loopsmc/energy.hpp"
#include "loopsmc/template_io.hpp"

namespace loopsmc {

struct LennardJonesParams
{
	std::array<double, kNumElements> radius{1.70, 1.55, 1.52, 1.80};  // C N O S, Å
	std::array<double, kNumElements> epsilon{0.10, 0.16, 0.20, 0.25}; // kcal/mol
	double clash_energy = 10.0; // above this the pair is infeasible
	double floor_energy = -10.0;
	double bin_width = 0.05;
	double max_distance = 6.0;
};

/// 12-6 potential ε[(r0/r)^12 - 2(r0/r)^6] with r0 = Ra + Rb, ε = sqrt(εa εb),
/// evaluated at bin midpoints.
inline PairwiseTable lennard_jones_table(const LennardJonesParams &p = {})
{
	return PairwiseTable::from_function(p.bin_width, p.max_distance, [&](Element a, Element b, double lo, double hi) {
		double r = 0.5 * (lo + hi);
		double r0 = p.radius[size_t(a)] + p.radius[size_t(b)];
		double eps = std::sqrt(p.epsilon[size_t(a)] * p.epsilon[size_t(b)]);
		double x6 = std::pow(r0 / r, 6);
		double e = eps * (x6 * x6 - 2.0 * x6);
		if (!(e <= p.clash_energy))
			return kInf;
		return std::max(e, p.floor_energy);
	});
}

/// Minimal rotamer set: canonical staggered values per χ, with the serine
/// positions 65.6/-179.2/-63.8 and two proline puckers.
inline RotamerLibrary default_rotamer_library()
{
	using V = std::vector<double>;
	const V stag{62.0, -177.0, -65.0};
	RotamerLibrary lib;
	auto product = [](const std::vector<V> &axes) {
		std::vector<Rotamer> out{Rotamer{}};
		for (size_t k = 0; k < axes.size(); ++k)
		{
			std::vector<Rotamer> next;
			for (auto &r : out)
				for (double v : axes[k])
				{
					Rotamer x = r;
					x.chi[k] = v;
					next.push_back(x);
				}
			out = std::move(next);
		}
		return out;
	};
	auto set = [&](AminoAcid a, std::vector<Rotamer> rs) {
		for (auto &r : rs)
			r.probability = 1.0 / double(rs.size());
		lib.set(a, std::move(rs));
	};
	using A = AminoAcid;
	set(A::ALA, {Rotamer{}});
	set(A::GLY, {Rotamer{}});
	set(A::SER, product({{65.6, -179.2, -63.8}}));
	set(A::CYS, product({stag}));
	set(A::THR, product({stag}));
	set(A::VAL, product({{175.0, -60.0, 63.0}}));
	set(A::ILE, product({stag, stag}));
	set(A::LEU, product({stag, stag}));
	set(A::ASP, product({stag, {-60.0, 0.0, 60.0}}));
	set(A::ASN, product({stag, {-150.0, -90.0, -30.0, 30.0, 90.0, 150.0}}));
	set(A::HIS, product({stag, {-90.0, 90.0, 180.0}}));
	set(A::PHE, product({stag, {90.0, -30.0}}));
	set(A::TYR, product({stag, {90.0, -30.0}}));
	set(A::TRP, product({stag, {-90.0, 0.0, 90.0, 180.0}}));
	set(A::MET, product({stag, stag, stag}));
	set(A::GLU, product({stag, stag, {-60.0, 0.0, 60.0}}));
	set(A::GLN, product({stag, stag, {-90.0, -30.0, 30.0, 90.0}}));
	set(A::LYS, product({stag, stag, stag, stag}));
	{
		// drop the two χ2/χ3 combinations that fold the chain back onto itself at χ1 = g+
		auto all = product({stag, stag, stag, stag});
		std::vector<Rotamer> keep;
		for (auto &r : all)
		{
			bool bad = r.chi[0] == 62.0 && ((r.chi[1] == 62.0 && r.chi[2] == -65.0) ||
			                                (r.chi[1] == -65.0 && r.chi[2] == 62.0));
			if (!bad)
				keep.push_back(r);
		}
		set(A::ARG, keep);
	}
	set(A::PRO, {Rotamer{{30.0, -35.0, 0, 0}, 0.5}, Rotamer{{-30.0, 40.0, 0, 0}, 0.5}});
	lib.chi1_sd = 10.0;
	lib.validate();
	return lib;
}

/// Per-type (φ, ψ) histogram from every chain of the given structures, Laplace
/// smoothed: p = (count + alpha) / (total + alpha·n²).
struct RamaCorpusStats
{
	size_t files = 0;
	size_t residues = 0;
};

inline RamachandranGrid estimate_ramachandran(const std::vector<std::string> &pdb_paths, int n = 72,
                                              double alpha = 1.0, double cutoff = 2e-5,
                                              RamaCorpusStats *stats = nullptr)
{
	std::array<std::vector<double>, kNumAminoAcids> counts;
	for (auto &c : counts)
		c.assign(size_t(n * n), 0.0);
	RamachandranGrid grid = RamachandranGrid::uniform(n, cutoff);
	RamaCorpusStats st;
	for (auto &path : pdb_paths)
	{
		std::string text = read_file(path);
		std::vector<std::string> chains;
		{
			std::istringstream in(text);
			std::string line;
			while (std::getline(in, line))
				if (line.rfind("ATOM  ", 0) == 0 && line.size() > 21)
				{
					std::string ch(1, line[21]);
					if (std::find(chains.begin(), chains.end(), ch) == chains.end())
						chains.push_back(ch);
				}
				else if (line.rfind("ENDMDL", 0) == 0)
					break;
		}
		++st.files;
		for (auto &ch : chains)
		{
			std::istringstream in(text);
			Template t;
			try
			{
				t = parse_template(in, ch);
			}
			catch (const DataError &)
			{
				continue;
			}
			auto &R = t.residues;
			for (size_t i = 1; i + 1 < R.size(); ++i)
			{
				if (R[i - 1].resnum + 1 != R[i].resnum || R[i].resnum + 1 != R[i + 1].resnum)
					continue;
				auto *cp = R[i - 1].find("C");
				auto *am = R[i].find("N");
				auto *ca = R[i].find("CA");
				auto *c = R[i].find("C");
				auto *nn = R[i + 1].find("N");
				if (!cp || !am || !ca || !c || !nn)
					continue;
				if (distance(cp->pos, am->pos) > 2.0 || distance(c->pos, nn->pos) > 2.0)
					continue;
				auto phi = dihedral_angle(cp->pos, am->pos, ca->pos, c->pos);
				auto psi = dihedral_angle(am->pos, ca->pos, c->pos, nn->pos);
				if (!phi || !psi)
					continue;
				int a = grid.nearest_index(*phi), b = grid.nearest_index(*psi);
				counts[size_t(R[i].type)][size_t(a * n + b)] += 1.0;
				++st.residues;
			}
		}
	}
	std::array<std::vector<double>, kNumAminoAcids> p;
	for (int t = 0; t < kNumAminoAcids; ++t)
	{
		double total = 0;
		for (double c : counts[size_t(t)])
			total += c;
		double denom = total + alpha * n * n;
		p[size_t(t)].resize(size_t(n * n));
		for (size_t k = 0; k < p[size_t(t)].size(); ++k)
			p[size_t(t)][k] = (counts[size_t(t)][k] + alpha) / denom;
	}
	if (stats)
		*stats = st;
	return RamachandranGrid::from_tables(n, p, cutoff);
}

/// Structure files (.pdb, .ent) directly inside a directory, sorted by name.
inline std::vector<std::string> list_corpus(const std::string &dir)
{
	namespace fs = std::filesystem;
	std::error_code ec;
	if (!fs::is_directory(dir, ec))
		throw DataError("corpus directory not readable: " + dir);
	std::vector<std::string> out;
	for (auto &e : fs::directory_iterator(dir))
	{
		auto ext = e.path().extension().string();
		if (e.is_regular_file() && (ext == ".pdb" || ext == ".ent" || ext == ".PDB"))
			out.push_back(e.path().string());
	}
	std::sort(out.begin(), out.end());
	return out;
}

/// Writes rama.tsv, rotamers.tsv, pairwise.tsv and geometry.txt into `dir`.
inline std::vector<std::string> write_default_tables(const std::string &dir, const RamachandranGrid &rama)
{
	namespace fs = std::filesystem;
	fs::create_directories(dir);
	std::vector<std::string> written;
	auto put = [&](const char *name, auto &&fn) {
		std::string path = (fs::path(dir) / name).string();
		std::ofstream os(path, std::ios::binary);
		if (!os)
			throw DataError("cannot write " + path);
		fn(os);
		written.push_back(path);
	};
	put("rama.tsv", [&](std::ostream &os) { rama.write(os); });
	put("rotamers.tsv", [&](std::ostream &os) { default_rotamer_library().write(os); });
	put("pairwise.tsv", [&](std::ostream &os) { lennard_jones_table().write(os); });
	put("geometry.txt", [&](std::ostream &os) { os << IdealGeometry{}.to_text(); });
	return written;
}

/// In-memory model with the stand-in tables and a uniform Ramachandran grid.
inline EnergyModel default_energy_model(int grid_size = 72)
{
	EnergyModel m;
	m.rama = RamachandranGrid::uniform(grid_size);
	m.rotamers = default_rotamer_library();
	m.pairwise = lennard_jones_table();
	return m;
}

} // namespace loopsmc
