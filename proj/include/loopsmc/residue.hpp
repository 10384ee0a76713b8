#pragma once

// Amino-acid types, heavy-atom topology and side-chain construction from χ angles.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loopsmc/error.hpp"
#include "loopsmc/geometry.hpp"

namespace loopsmc {

enum class AminoAcid : uint8_t
{
	ALA, ARG, ASN, ASP, CYS, GLN, GLU, GLY, HIS, ILE,
	LEU, LYS, MET, PHE, PRO, SER, THR, TRP, TYR, VAL
};

inline constexpr int kNumAminoAcids = 20;

enum class Element : uint8_t
{
	C, N, O, S
};

inline constexpr int kNumElements = 4;

inline constexpr std::array<const char *, kNumElements> kElementNames{"C", "N", "O", "S"};

inline std::optional<Element> element_from_name(std::string_view s)
{
	for (int i = 0; i < kNumElements; ++i)
		if (s == kElementNames[size_t(i)])
			return Element(i);
	return std::nullopt;
}

namespace detail {
inline constexpr std::array<const char *, kNumAminoAcids> kThree{
	"ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
	"LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL"};
inline constexpr std::string_view kOne = "ARNDCQEGHILKMFPSTWYV";
} // namespace detail

inline char one_letter(AminoAcid a) { return detail::kOne[size_t(a)]; }
inline const char *three_letter(AminoAcid a) { return detail::kThree[size_t(a)]; }

inline std::optional<AminoAcid> from_one_letter(char c)
{
	auto p = detail::kOne.find(c);
	if (p == std::string_view::npos)
		return std::nullopt;
	return AminoAcid(p);
}

inline std::optional<AminoAcid> from_three_letter(std::string_view s)
{
	for (int i = 0; i < kNumAminoAcids; ++i)
		if (s == detail::kThree[size_t(i)])
			return AminoAcid(i);
	return std::nullopt;
}

/// Parses a one-letter sequence; throws InvalidArgument on letters outside the 20-letter alphabet.
inline std::vector<AminoAcid> parse_sequence(std::string_view seq)
{
	std::vector<AminoAcid> out;
	out.reserve(seq.size());
	for (char c : seq)
	{
		auto a = from_one_letter(c);
		if (!a)
			throw InvalidArgument(std::string("invalid amino-acid letter '") + c + "' in sequence");
		out.push_back(*a);
	}
	return out;
}

/// One side-chain atom built from three earlier atoms of the same residue.
struct SideChainAtomDef
{
	const char *name;
	Element element;
	std::array<int8_t, 3> refs; // indices into the residue atom list
	double bond, angle;
	int8_t chi;    // which χ drives the torsion, -1 for fixed
	double offset; // torsion = χ + offset, or the fixed torsion
};

/// Heavy-atom topology of one residue type: atoms N, CA, C, O then side chain.
struct ResidueTopology
{
	AminoAcid type;
	int n_chi = 0;
	std::vector<SideChainAtomDef> side_chain; // residue atom index = 4 + position
	std::vector<std::array<int8_t, 2>> bonds;  // intra-residue bonds
	std::vector<std::vector<uint8_t>> graph_distance;
	std::vector<uint8_t> dist_to_n, dist_to_c;

	size_t atom_count() const { return 4 + side_chain.size(); }

	const char *atom_name(size_t i) const
	{
		static const char *bb[4] = {"N", "CA", "C", "O"};
		return i < 4 ? bb[i] : side_chain[i - 4].name;
	}

	Element atom_element(size_t i) const
	{
		static const Element bb[4] = {Element::N, Element::C, Element::C, Element::O};
		return i < 4 ? bb[i] : side_chain[i - 4].element;
	}

	std::optional<size_t> atom_index(std::string_view name) const
	{
		for (size_t i = 0; i < atom_count(); ++i)
			if (name == atom_name(i))
				return i;
		return std::nullopt;
	}
};

namespace detail {

enum : int8_t
{
	N_ = 0, CA_ = 1, C_ = 2, O_ = 3, CB_ = 4
};

inline ResidueTopology make_topology(AminoAcid a)
{
	ResidueTopology t;
	t.type = a;
	auto &sc = t.side_chain;
	auto add = [&](const char *name, Element e, int8_t r0, int8_t r1, int8_t r2, double b, double ang, int8_t chi,
	               double off) { sc.push_back({name, e, {r0, r1, r2}, b, ang, chi, off}); };
	const Element C = Element::C, N = Element::N, O = Element::O, S = Element::S;
	if (a != AminoAcid::GLY)
		add("CB", C, C_, N_, CA_, 1.53, 110.5, -1, -122.6);
	switch (a)
	{
	case AminoAcid::GLY:
	case AminoAcid::ALA:
		break;
	case AminoAcid::SER:
		add("OG", O, N_, CA_, CB_, 1.417, 110.8, 0, 0);
		break;
	case AminoAcid::CYS:
		add("SG", S, N_, CA_, CB_, 1.808, 113.8, 0, 0);
		break;
	case AminoAcid::VAL:
		add("CG1", C, N_, CA_, CB_, 1.527, 110.7, 0, 0);
		add("CG2", C, N_, CA_, CB_, 1.527, 110.4, 0, 120);
		break;
	case AminoAcid::THR:
		add("OG1", O, N_, CA_, CB_, 1.43, 109.2, 0, 0);
		add("CG2", C, N_, CA_, CB_, 1.53, 111.1, 0, -120);
		break;
	case AminoAcid::ILE:
		add("CG1", C, N_, CA_, CB_, 1.527, 110.7, 0, 0);
		add("CG2", C, N_, CA_, CB_, 1.527, 110.4, 0, -120);
		add("CD1", C, CA_, CB_, 5, 1.52, 113.8, 1, 0);
		break;
	case AminoAcid::LEU:
		add("CG", C, N_, CA_, CB_, 1.53, 116.1, 0, 0);
		add("CD1", C, CA_, CB_, 5, 1.524, 110.3, 1, 0);
		add("CD2", C, CA_, CB_, 5, 1.525, 110.6, 1, 120);
		break;
	case AminoAcid::MET:
		add("CG", C, N_, CA_, CB_, 1.52, 114.0, 0, 0);
		add("SD", S, CA_, CB_, 5, 1.81, 112.7, 1, 0);
		add("CE", C, CB_, 5, 6, 1.79, 100.8, 2, 0);
		break;
	case AminoAcid::ASN:
		add("CG", C, N_, CA_, CB_, 1.52, 112.6, 0, 0);
		add("OD1", O, CA_, CB_, 5, 1.23, 120.8, 1, 0);
		add("ND2", N, CA_, CB_, 5, 1.33, 116.4, 1, 180);
		break;
	case AminoAcid::ASP:
		add("CG", C, N_, CA_, CB_, 1.52, 112.6, 0, 0);
		add("OD1", O, CA_, CB_, 5, 1.25, 119.2, 1, 0);
		add("OD2", O, CA_, CB_, 5, 1.25, 118.2, 1, 180);
		break;
	case AminoAcid::GLN:
		add("CG", C, N_, CA_, CB_, 1.52, 114.0, 0, 0);
		add("CD", C, CA_, CB_, 5, 1.52, 112.6, 1, 0);
		add("OE1", O, CB_, 5, 6, 1.24, 120.9, 2, 0);
		add("NE2", N, CB_, 5, 6, 1.33, 116.5, 2, 180);
		break;
	case AminoAcid::GLU:
		add("CG", C, N_, CA_, CB_, 1.52, 114.0, 0, 0);
		add("CD", C, CA_, CB_, 5, 1.52, 113.0, 1, 0);
		add("OE1", O, CB_, 5, 6, 1.25, 119.0, 2, 0);
		add("OE2", O, CB_, 5, 6, 1.25, 118.1, 2, 180);
		break;
	case AminoAcid::LYS:
		add("CG", C, N_, CA_, CB_, 1.52, 114.0, 0, 0);
		add("CD", C, CA_, CB_, 5, 1.52, 111.6, 1, 0);
		add("CE", C, CB_, 5, 6, 1.52, 111.9, 2, 0);
		add("NZ", N, 5, 6, 7, 1.49, 111.9, 3, 0);
		break;
	case AminoAcid::ARG:
		add("CG", C, N_, CA_, CB_, 1.52, 114.0, 0, 0);
		add("CD", C, CA_, CB_, 5, 1.52, 111.5, 1, 0);
		add("NE", N, CB_, 5, 6, 1.46, 111.7, 2, 0);
		add("CZ", C, 5, 6, 7, 1.33, 124.8, 3, 0);
		add("NH1", N, 6, 7, 8, 1.33, 120.6, -1, 0);
		add("NH2", N, 6, 7, 8, 1.33, 119.9, -1, 180);
		break;
	case AminoAcid::HIS:
		add("CG", C, N_, CA_, CB_, 1.50, 113.7, 0, 0);
		add("ND1", N, CA_, CB_, 5, 1.38, 122.8, 1, 0);
		add("CD2", C, CA_, CB_, 5, 1.36, 130.6, 1, 180);
		add("CE1", C, CB_, 5, 6, 1.32, 108.5, -1, 180);
		add("NE2", N, CB_, 5, 7, 1.37, 107.0, -1, 180);
		break;
	case AminoAcid::PHE:
	case AminoAcid::TYR:
		add("CG", C, N_, CA_, CB_, 1.50, 113.8, 0, 0);
		add("CD1", C, CA_, CB_, 5, 1.39, 120.7, 1, 0);
		add("CD2", C, CA_, CB_, 5, 1.39, 120.7, 1, 180);
		add("CE1", C, CB_, 5, 6, 1.39, 120.7, -1, 180);
		add("CE2", C, CB_, 5, 7, 1.39, 120.7, -1, 180);
		add("CZ", C, 5, 6, 8, 1.39, 120.0, -1, 0);
		if (a == AminoAcid::TYR)
			add("OH", O, 6, 8, 10, 1.39, 119.8, -1, 180);
		break;
	case AminoAcid::TRP:
		add("CG", C, N_, CA_, CB_, 1.50, 114.1, 0, 0);
		add("CD1", C, CA_, CB_, 5, 1.37, 127.1, 1, 0);
		add("CD2", C, CA_, CB_, 5, 1.43, 126.6, 1, 180);
		add("NE1", N, CB_, 5, 6, 1.38, 108.5, -1, 180);
		add("CE2", C, CB_, 5, 7, 1.40, 108.5, -1, 180);
		add("CE3", C, CB_, 5, 7, 1.40, 133.8, -1, 0);
		add("CZ2", C, 5, 7, 9, 1.40, 120.0, -1, 180);
		add("CZ3", C, 5, 7, 10, 1.39, 120.0, -1, 180);
		add("CH2", C, 7, 9, 11, 1.39, 120.0, -1, 0);
		break;
	case AminoAcid::PRO:
		add("CG", C, N_, CA_, CB_, 1.50, 104.5, 0, 0);
		add("CD", C, CA_, CB_, 5, 1.50, 105.5, 1, 0);
		break;
	}
	for (auto &d : sc)
		t.n_chi = std::max(t.n_chi, d.chi + 1);

	// bonds: backbone, side-chain parent links, ring closures
	t.bonds = {{N_, CA_}, {CA_, C_}, {C_, O_}};
	for (size_t i = 0; i < sc.size(); ++i)
		t.bonds.push_back({sc[i].refs[2], int8_t(4 + i)});
	auto idx = [&](const char *nm) { return int8_t(*t.atom_index(nm)); };
	switch (a)
	{
	case AminoAcid::PRO:
		t.bonds.push_back({idx("CD"), N_});
		break;
	case AminoAcid::HIS:
		t.bonds.push_back({idx("CE1"), idx("NE2")});
		break;
	case AminoAcid::PHE:
	case AminoAcid::TYR:
		t.bonds.push_back({idx("CE2"), idx("CZ")});
		break;
	case AminoAcid::TRP:
		t.bonds.push_back({idx("NE1"), idx("CE2")});
		t.bonds.push_back({idx("CZ3"), idx("CH2")});
		break;
	default:
		break;
	}

	// all-pairs graph distances (BFS)
	size_t n = t.atom_count();
	std::vector<std::vector<int>> adj(n);
	for (auto &b : t.bonds)
	{
		adj[size_t(b[0])].push_back(b[1]);
		adj[size_t(b[1])].push_back(b[0]);
	}
	t.graph_distance.assign(n, std::vector<uint8_t>(n, 255));
	for (size_t s = 0; s < n; ++s)
	{
		std::vector<size_t> q{s};
		t.graph_distance[s][s] = 0;
		for (size_t h = 0; h < q.size(); ++h)
			for (int nb : adj[q[h]])
				if (t.graph_distance[s][size_t(nb)] == 255)
				{
					t.graph_distance[s][size_t(nb)] = uint8_t(t.graph_distance[s][q[h]] + 1);
					q.push_back(size_t(nb));
				}
	}
	t.dist_to_n.resize(n);
	t.dist_to_c.resize(n);
	for (size_t i = 0; i < n; ++i)
	{
		t.dist_to_n[i] = t.graph_distance[i][N_];
		t.dist_to_c[i] = t.graph_distance[i][C_];
	}
	return t;
}

} // namespace detail

inline const ResidueTopology &topology(AminoAcid a)
{
	static const std::array<ResidueTopology, kNumAminoAcids> all = [] {
		std::array<ResidueTopology, kNumAminoAcids> r;
		for (int i = 0; i < kNumAminoAcids; ++i)
			r[size_t(i)] = detail::make_topology(AminoAcid(i));
		return r;
	}();
	return all[size_t(a)];
}

/// Number of χ angles of a residue type (0 for Gly and Ala).
inline int chi_count(AminoAcid a) { return topology(a).n_chi; }

/// Builds side-chain atoms (in topology order, CB first) from the residue's N, CA, C and χ angles.
inline void build_side_chain(AminoAcid a, const Vec3 &n, const Vec3 &ca, const Vec3 &c,
                             const double *chi, std::vector<Vec3> &out)
{
	const auto &t = topology(a);
	out.clear();
	if (t.side_chain.empty())
		return;
	std::array<Vec3, 16> atoms;
	atoms[0] = n;
	atoms[1] = ca;
	atoms[2] = c;
	atoms[3] = Vec3{}; // O is never a reference
	for (size_t i = 0; i < t.side_chain.size(); ++i)
	{
		const auto &d = t.side_chain[i];
		double tors = d.chi >= 0 ? chi[d.chi] + d.offset : d.offset;
		atoms[4 + i] = place_atom(atoms[size_t(d.refs[0])], atoms[size_t(d.refs[1])], atoms[size_t(d.refs[2])], d.bond,
		                          d.angle, tors);
		out.push_back(atoms[4 + i]);
	}
}

/// Measures χ angles from built side-chain atoms (inverse of build_side_chain for driven atoms).
inline std::vector<double> measure_chi(AminoAcid a, const Vec3 &n, const Vec3 &ca, const Vec3 &c,
                                       const std::vector<Vec3> &side_chain)
{
	const auto &t = topology(a);
	std::vector<double> chi(size_t(t.n_chi), 0.0);
	std::array<Vec3, 16> atoms;
	atoms[0] = n;
	atoms[1] = ca;
	atoms[2] = c;
	for (size_t i = 0; i < side_chain.size() && i < t.side_chain.size(); ++i)
		atoms[4 + i] = side_chain[i];
	std::vector<bool> done(chi.size(), false);
	for (size_t i = 0; i < t.side_chain.size(); ++i)
	{
		const auto &d = t.side_chain[i];
		if (d.chi < 0 || done[size_t(d.chi)] || d.offset != 0)
			continue;
		chi[size_t(d.chi)] = wrap_degrees(torsion(atoms[size_t(d.refs[0])], atoms[size_t(d.refs[1])],
		                                          atoms[size_t(d.refs[2])], atoms[4 + i]));
		done[size_t(d.chi)] = true;
	}
	return chi;
}

} // namespace loopsmc
