#pragma once

// PDB templates: parsing, segment definition, mutation and structure output.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "loopsmc/conformation.hpp"
#include "loopsmc/error.hpp"
#include "loopsmc/geometry.hpp"
#include "loopsmc/residue.hpp"

namespace loopsmc {

struct TemplateAtom
{
	std::string name;
	Element element = Element::C;
	Vec3 pos;
	double occupancy = 1.0;
	double bfactor = 0.0;
	uint8_t topo = 0; // index in the residue topology
};

struct TemplateResidue
{
	int resnum = 0;
	AminoAcid type = AminoAcid::GLY;
	std::vector<TemplateAtom> atoms;

	const TemplateAtom *find(std::string_view name) const
	{
		for (auto &a : atoms)
			if (a.name == name)
				return &a;
		return nullptr;
	}

	std::vector<std::string> missing_backbone() const
	{
		std::vector<std::string> out;
		for (const char *nm : {"N", "CA", "C", "O"})
			if (!find(nm))
				out.emplace_back(nm);
		return out;
	}
};

/// Inclusive author-numbered range plus the sequence to model there.
struct SegmentSpec
{
	int start = 0, end = 0;
	std::string sequence;

	int length() const { return end - start + 1; }

	void validate() const
	{
		if (end < start)
			throw InvalidArgument("segment end precedes start");
		if (int(sequence.size()) != length())
			throw InvalidArgument("segment sequence length " + std::to_string(sequence.size()) +
			                      " does not match range length " + std::to_string(length()));
		if (length() < 4)
			throw InvalidArgument("segment must contain at least 4 residues");
		parse_sequence(sequence);
	}
};

/// Fixed atom with the bookkeeping the energy needs for bonded exclusions.
struct AtomRecord
{
	Vec3 pos;
	Element element = Element::C;
	AminoAcid aa = AminoAcid::GLY;
	uint8_t topo = 0;
	int resnum = 0;
};

struct Template
{
	std::string chain;
	std::vector<TemplateResidue> residues; // ascending author number
	std::vector<int> gaps;                 // unresolved numbers between the first and last residue
	std::string seqres;                    // SEQRES sequence (one-letter), empty if absent
	std::optional<int> seqres_offset;      // author number of seqres[0]
	std::optional<SegmentSpec> segment;    // set by apply_mutation
	std::vector<std::string> warnings;

	const TemplateResidue *residue(int resnum) const
	{
		auto it = std::lower_bound(residues.begin(), residues.end(), resnum,
		                           [](const TemplateResidue &r, int n) { return r.resnum < n; });
		return (it != residues.end() && it->resnum == resnum) ? &*it : nullptr;
	}

	TemplateResidue *residue(int resnum)
	{
		return const_cast<TemplateResidue *>(std::as_const(*this).residue(resnum));
	}

	/// One-letter sequence over [start, end]; unresolved positions are filled from
	/// SEQRES when available, otherwise reported as an error.
	std::string reference_sequence(int start, int end) const
	{
		std::string s;
		for (int n = start; n <= end; ++n)
		{
			if (auto *r = residue(n))
				s += one_letter(r->type);
			else if (seqres_offset && n - *seqres_offset >= 0 && n - *seqres_offset < int(seqres.size()))
				s += seqres[size_t(n - *seqres_offset)];
			else
				throw DataError("residue " + std::to_string(n) + " is unresolved and not covered by SEQRES");
		}
		return s;
	}

	/// All atoms held fixed during sampling.
	std::vector<AtomRecord> fixed_atoms() const
	{
		std::vector<AtomRecord> out;
		for (auto &r : residues)
			for (auto &a : r.atoms)
				out.push_back({a.pos, a.element, r.type, a.topo, r.resnum});
		return out;
	}

	size_t atom_count() const
	{
		size_t n = 0;
		for (auto &r : residues)
			n += r.atoms.size();
		return n;
	}
};

namespace detail {

inline std::string trim(std::string_view s)
{
	size_t a = s.find_first_not_of(' '), b = s.find_last_not_of(' ');
	if (a == std::string_view::npos)
		return {};
	return std::string(s.substr(a, b - a + 1));
}

inline std::string column(const std::string &line, size_t from, size_t to) // 1-based inclusive
{
	if (line.size() < from)
		return {};
	return trim(std::string_view(line).substr(from - 1, std::min(to, line.size()) - from + 1));
}

inline double parse_real(const std::string &s, const char *what, int lineno)
{
	try
	{
		size_t pos = 0;
		double v = std::stod(s, &pos);
		if (pos != s.size() || !std::isfinite(v))
			throw std::invalid_argument(s);
		return v;
	}
	catch (const std::exception &)
	{
		throw DataError("PDB line " + std::to_string(lineno) + ": bad " + what + " '" + s + "'");
	}
}

} // namespace detail

/// Parses ATOM records of one chain from the first model of a PDB file.
inline Template parse_template(std::istream &in, const std::string &chain)
{
	Template t;
	t.chain = chain;
	struct Candidate
	{
		TemplateAtom atom;
		size_t order;
	};
	std::map<int, std::pair<AminoAcid, std::map<std::string, Candidate>>> by_res;
	std::map<int, std::string> unknown;
	std::vector<std::string> seqres_names;
	std::string line;
	int lineno = 0;
	size_t order = 0;
	bool in_model = false, seen_model = false;
	while (std::getline(in, line))
	{
		++lineno;
		if (!line.empty() && line.back() == '\r')
			line.pop_back();
		std::string rec = line.substr(0, std::min<size_t>(6, line.size()));
		if (rec == "MODEL ")
		{
			if (seen_model)
				break;
			in_model = seen_model = true;
			continue;
		}
		if (rec == "ENDMDL")
		{
			if (in_model)
				break;
			continue;
		}
		if (rec == "SEQRES" && detail::column(line, 12, 12) == chain)
		{
			std::istringstream ls(line.size() > 19 ? line.substr(19) : std::string());
			std::string nm;
			while (ls >> nm)
				seqres_names.push_back(nm);
			continue;
		}
		if (rec != "ATOM  ")
			continue;
		if (line.size() < 54)
			throw DataError("PDB line " + std::to_string(lineno) + ": truncated ATOM record");
		if (detail::column(line, 22, 22) != chain)
			continue;
		std::string name = detail::column(line, 13, 16);
		std::string alt = detail::column(line, 17, 17);
		std::string resname = detail::column(line, 18, 20);
		std::string icode = detail::column(line, 27, 27);
		std::string elem = detail::column(line, 77, 78);
		int resnum;
		try
		{
			resnum = std::stoi(detail::column(line, 23, 26));
		}
		catch (const std::exception &)
		{
			throw DataError("PDB line " + std::to_string(lineno) + ": bad residue number");
		}
		if (!icode.empty())
			throw DataError("PDB line " + std::to_string(lineno) + ": insertion code '" + icode + "' at residue " +
			                std::to_string(resnum) + " is not supported");
		if (elem == "H" || elem == "D" || (elem.empty() && (name[0] == 'H' || name[0] == 'D')))
			continue;
		auto aa = from_three_letter(resname);
		if (!aa)
		{
			unknown.emplace(resnum, resname);
			continue;
		}
		const auto &topo = topology(*aa);
		std::string tname = (name == "OXT") ? "O" : name;
		auto ti = topo.atom_index(tname);
		if (!ti)
		{
			t.warnings.push_back("residue " + std::to_string(resnum) + " " + resname + ": skipping unexpected atom " +
			                     name);
			continue;
		}
		TemplateAtom a;
		a.name = name;
		a.element = topo.atom_element(*ti);
		a.topo = uint8_t(*ti);
		a.pos = {detail::parse_real(detail::column(line, 31, 38), "x", lineno),
		         detail::parse_real(detail::column(line, 39, 46), "y", lineno),
		         detail::parse_real(detail::column(line, 47, 54), "z", lineno)};
		std::string occ = detail::column(line, 55, 60);
		a.occupancy = occ.empty() ? 1.0 : detail::parse_real(occ, "occupancy", lineno);
		std::string bf = detail::column(line, 61, 66);
		a.bfactor = bf.empty() ? 0.0 : detail::parse_real(bf, "B-factor", lineno);
		auto &slot = by_res[resnum];
		if (slot.second.empty())
			slot.first = *aa;
		else if (slot.first != *aa)
		{
			// alternate residue identities: keep the first one seen
			t.warnings.push_back("residue " + std::to_string(resnum) + ": alternate residue " + resname + " ignored");
			continue;
		}
		auto it = slot.second.find(name);
		if (it == slot.second.end())
			slot.second.emplace(name, Candidate{a, order++});
		else if (a.occupancy > it->second.atom.occupancy)
			it->second.atom = a; // keeps the first-seen slot order
		(void)alt;
	}
	for (auto &[n, nm] : unknown)
		if (!by_res.count(n))
			t.warnings.push_back("residue " + std::to_string(n) + ": unknown residue name " + nm + " skipped");
	if (by_res.empty())
		throw DataError("no ATOM records for chain '" + chain + "'");
	for (auto &[n, slot] : by_res)
	{
		TemplateResidue r;
		r.resnum = n;
		r.type = slot.first;
		std::vector<Candidate> atoms;
		for (auto &[nm, c] : slot.second)
			atoms.push_back(c);
		std::sort(atoms.begin(), atoms.end(), [](const Candidate &a, const Candidate &b) { return a.order < b.order; });
		for (auto &c : atoms)
			r.atoms.push_back(c.atom);
		t.residues.push_back(std::move(r));
	}
	for (size_t i = 1; i < t.residues.size(); ++i)
		for (int n = t.residues[i - 1].resnum + 1; n < t.residues[i].resnum; ++n)
			t.gaps.push_back(n);

	if (!seqres_names.empty())
	{
		for (auto &nm : seqres_names)
		{
			auto aa = from_three_letter(nm);
			t.seqres += aa ? one_letter(*aa) : 'X';
		}
		// align: the offset under which every observed residue matches SEQRES
		int first = t.residues.front().resnum;
		for (int k = 0; k < int(t.seqres.size()); ++k)
		{
			int off = first - k;
			bool ok = true;
			for (auto &r : t.residues)
			{
				int idx = r.resnum - off;
				if (idx < 0 || idx >= int(t.seqres.size()) || t.seqres[size_t(idx)] != one_letter(r.type))
				{
					ok = false;
					break;
				}
			}
			if (ok)
			{
				t.seqres_offset = off;
				break;
			}
		}
		if (!t.seqres_offset)
			t.warnings.push_back("SEQRES does not align with the observed residues; ignored");
	}
	return t;
}

inline Template parse_template(const std::string &text_or_path, const std::string &chain, bool is_path)
{
	if (is_path)
	{
		std::ifstream in(text_or_path);
		if (!in)
			throw DataError("cannot open template " + text_or_path);
		return parse_template(in, chain);
	}
	std::istringstream in(text_or_path);
	return parse_template(in, chain);
}

/// Replaces the segment's sequence and removes every atom that will be sampled:
/// all atoms of interior residues, C, O and side chain of the first residue, and
/// N and side chain of the last one.
inline Template apply_mutation(const Template &tpl, const SegmentSpec &seg)
{
	seg.validate();
	auto seq = parse_sequence(seg.sequence);
	const auto *first = tpl.residue(seg.start);
	const auto *last = tpl.residue(seg.end);
	if (!first || !last)
		throw InvalidArgument("segment " + std::to_string(seg.start) + "-" + std::to_string(seg.end) +
		                      " endpoints are not resolved in the template");
	auto need = [&](int resnum, const char *atom) {
		auto *r = tpl.residue(resnum);
		if (!r || !r->find(atom))
			throw InvalidArgument("segment anchor atom " + std::string(atom) + " of residue " +
			                      std::to_string(resnum) + " is missing from the template");
		return r->find(atom)->pos;
	};
	need(seg.start - 1, "C");
	Vec3 ca1 = need(seg.start, "CA");
	need(seg.start, "N");
	Vec3 cal = need(seg.end, "CA");
	need(seg.end, "C");
	need(seg.end, "O");
	need(seg.end + 1, "N");

	Template out = tpl;
	out.segment = seg;
	std::vector<TemplateResidue> kept;
	for (auto &r : tpl.residues)
	{
		if (r.resnum > seg.start && r.resnum < seg.end)
			continue;
		TemplateResidue nr = r;
		if (r.resnum == seg.start || r.resnum == seg.end)
		{
			nr.type = seq[size_t(r.resnum - seg.start)];
			const char *keep[3] = {"N", "CA", nullptr};
			if (r.resnum == seg.end)
			{
				keep[0] = "CA";
				keep[1] = "C";
				keep[2] = "O";
			}
			nr.atoms.clear();
			for (auto &a : r.atoms)
				for (const char *k : keep)
					if (k && a.name == k)
						nr.atoms.push_back(a);
		}
		else
		{
			auto miss = r.missing_backbone();
			if (!miss.empty())
			{
				double d = 1e9;
				for (auto &a : r.atoms)
					d = std::min({d, distance(a.pos, ca1), distance(a.pos, cal)});
				std::string msg = "residue " + std::to_string(r.resnum) + " lacks backbone atom(s)";
				for (auto &m : miss)
					msg += " " + m;
				if (d <= 10.0)
					throw DataError(msg + " within 10 A of the segment anchors");
				out.warnings.push_back(msg);
			}
		}
		kept.push_back(std::move(nr));
	}
	out.residues = std::move(kept);
	return out;
}

namespace detail {

inline void write_atom_line(std::ostream &os, int serial, const std::string &name, const char *resname, char chain,
                            int resnum, const Vec3 &p, double occ, double bf, Element e)
{
	char buf[100];
	// four-character names start in column 13, shorter ones in column 14
	char nm[5];
	if (name.size() >= 4)
		std::snprintf(nm, sizeof nm, "%-4.4s", name.c_str());
	else
		std::snprintf(nm, sizeof nm, " %-3s", name.c_str());
	std::snprintf(buf, sizeof buf, "ATOM  %5d %4s %3s %c%4d    %8.3f%8.3f%8.3f%6.2f%6.2f          %2s\n",
	              serial % 100000, nm, resname, chain, resnum, p.x, p.y, p.z, occ, bf,
	              kElementNames[size_t(e)]);
	os << buf;
}

} // namespace detail

/// Writes the residues of a template as ATOM records.
inline void write_template(std::ostream &os, const Template &t)
{
	int serial = 1;
	char chain = t.chain.empty() ? 'A' : t.chain[0];
	for (auto &r : t.residues)
		for (auto &a : r.atoms)
			detail::write_atom_line(os, serial++, a.name, three_letter(r.type), chain, r.resnum, a.pos, a.occupancy,
			                        a.bfactor, a.element);
	os << "END\n";
}

/// Writes segment atoms of one conformation (no MODEL wrapper).
inline void write_conformation_atoms(std::ostream &os, const Conformation &c, char chain = 'A')
{
	int serial = 1;
	for (size_t i = 0; i < c.sequence.size(); ++i)
	{
		const auto &topo = topology(c.sequence[i]);
		int resnum = c.start + int(i);
		for (size_t k = 0; k < 4; ++k)
			detail::write_atom_line(os, serial++, topo.atom_name(k), three_letter(c.sequence[i]), chain, resnum,
			                        c.backbone[i][k], 1.0, 0.0, topo.atom_element(k));
		if (i < c.side_chains.size())
			for (size_t k = 0; k < c.side_chains[i].size(); ++k)
				detail::write_atom_line(os, serial++, topo.atom_name(4 + k), three_letter(c.sequence[i]), chain,
				                        resnum, c.side_chains[i][k], 1.0, 0.0, topo.atom_element(4 + k));
	}
}

/// Multi-model PDB; model numbering follows input order.
inline void write_conformations(std::ostream &os, const std::vector<Conformation> &confs, char chain = 'A')
{
	char buf[128];
	for (size_t m = 0; m < confs.size(); ++m)
	{
		const auto &c = confs[m];
		std::snprintf(buf, sizeof buf, "REMARK 250 MODEL %zu ID %llu LABEL %s\n", m + 1,
		              static_cast<unsigned long long>(c.id), c.label.c_str());
		os << buf;
		std::snprintf(buf, sizeof buf, "REMARK 250 MODEL %zu WEIGHT %.10e ENERGY %.10e\n", m + 1, c.weight, c.energy);
		os << buf;
	}
	for (size_t m = 0; m < confs.size(); ++m)
	{
		std::snprintf(buf, sizeof buf, "MODEL     %4zu\n", m + 1);
		os << buf;
		write_conformation_atoms(os, confs[m], chain);
		os << "ENDMDL\n";
	}
	os << "END\n";
}

/// One PDB file per conformation at `<prefix><id>.pdb`; returns the paths written.
inline std::vector<std::string> write_conformation_files(const std::string &prefix, const std::vector<Conformation> &confs,
                                                         char chain = 'A')
{
	std::vector<std::string> paths;
	for (auto &c : confs)
	{
		std::string path = prefix + std::to_string(c.id) + ".pdb";
		std::ofstream os(path);
		if (!os)
			throw DataError("cannot write " + path);
		write_conformations(os, {c}, chain);
		paths.push_back(path);
	}
	return paths;
}

/// Backbone coordinates (N, CA, C, O) of a template range, in segment order.
/// Throws DataError listing every position lacking one of these atoms.
inline std::vector<Vec3> template_backbone(const Template &t, int start, int end)
{
	std::vector<Vec3> out;
	std::string missing;
	for (int n = start; n <= end; ++n)
	{
		auto *r = t.residue(n);
		for (const char *nm : {"N", "CA", "C", "O"})
		{
			const TemplateAtom *a = r ? r->find(nm) : nullptr;
			if (!a)
			{
				missing += " " + std::to_string(n) + ":" + nm;
				continue;
			}
			out.push_back(a->pos);
		}
	}
	if (!missing.empty())
		throw DataError("template segment has unresolved backbone atoms:" + missing);
	return out;
}

/// Builds an ideal-geometry chain (backbone plus side chains) from dihedrals, as a
/// template. Side chains use the supplied χ (missing entries default to -60).
inline Template build_ideal_template(const std::string &sequence, int first_resnum,
                                     const std::vector<BackboneDihedrals> &dihedrals,
                                     const std::vector<std::vector<double>> &chi = {},
                                     const IdealGeometry &g = {}, const std::string &chain = "A")
{
	auto seq = parse_sequence(sequence);
	if (dihedrals.size() + 1 < seq.size())
		throw InvalidArgument("build_ideal_template: need a dihedral triple per residue");
	Template t;
	t.chain = chain;
	Vec3 n(0, 0, 0), ca(g.n_ca, 0, 0);
	Vec3 c_prev = place_atom(Vec3(1, 1, 0), ca, n, g.c_n, g.c_n_ca, 180.0);
	GrowthFrame f{c_prev, n, ca};
	std::vector<std::array<Vec3, 4>> bb(seq.size());
	for (size_t i = 0; i < seq.size(); ++i)
	{
		bb[i][0] = f.b;
		bb[i][1] = f.c;
		BackboneDihedrals d = i < dihedrals.size() ? dihedrals[i] : BackboneDihedrals{-60, 140, 180};
		auto p = extend_backbone(f, d, Direction::left, g);
		bb[i][2] = p.carbonyl_c;
		bb[i][3] = p.carbonyl_o;
		f = {p.carbonyl_c, p.amide_n, p.alpha_c};
	}
	for (size_t i = 0; i < seq.size(); ++i)
	{
		TemplateResidue r;
		r.resnum = first_resnum + int(i);
		r.type = seq[i];
		const auto &topo = topology(seq[i]);
		for (size_t k = 0; k < 4; ++k)
			r.atoms.push_back({topo.atom_name(k), topo.atom_element(k), bb[i][k], 1.0, 0.0, uint8_t(k)});
		std::vector<double> x(4, -60.0);
		if (i < chi.size())
			for (size_t k = 0; k < chi[i].size() && k < 4; ++k)
				x[k] = chi[i][k];
		std::vector<Vec3> sc;
		build_side_chain(seq[i], bb[i][0], bb[i][1], bb[i][2], x.data(), sc);
		for (size_t k = 0; k < sc.size(); ++k)
			r.atoms.push_back({topo.atom_name(4 + k), topo.atom_element(4 + k), sc[k], 1.0, 0.0, uint8_t(4 + k)});
		t.residues.push_back(std::move(r));
	}
	return t;
}

} // namespace loopsmc
