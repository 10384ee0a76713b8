#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loopsmc/geometry.hpp"
#include "loopsmc/residue.hpp"

namespace loopsmc {

/// Backbone dihedrals of one segment position; absent where undefined
/// (ω of the last residue, or positions not built in open-chain runs).
struct ResidueDihedrals
{
	std::optional<double> phi, psi, omega;
};

/// A completed segment: backbone and side chains in the template frame.
struct Conformation
{
	uint64_t id = 0;
	std::string label;
	int start = 0; // author number of the first segment residue
	std::vector<AminoAcid> sequence;
	std::vector<ResidueDihedrals> dihedrals;
	std::vector<std::vector<double>> chi;
	std::vector<std::array<Vec3, 4>> backbone; // N, CA, C, O per residue
	std::vector<std::vector<Vec3>> side_chains; // topology order, CB first
	double weight = 0;
	double energy = 0;
	/// Energy increments charged during growth, in order; their sum is `energy`.
	std::vector<double> increments;
	/// First of the three residues whose φ/ψ were set by loop closure, -1 if none.
	int bridge = -1;

	int end() const { return start + int(sequence.size()) - 1; }

	/// N, CA, C, O of every residue, in segment order.
	std::vector<Vec3> backbone_atoms() const
	{
		std::vector<Vec3> out;
		out.reserve(backbone.size() * 4);
		for (auto &r : backbone)
			out.insert(out.end(), r.begin(), r.end());
		return out;
	}

	std::string sequence_string() const
	{
		std::string s;
		for (auto a : sequence)
			s += one_letter(a);
		return s;
	}
};

} // namespace loopsmc
