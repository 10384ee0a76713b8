#pragma once

// JSON-lines sample files: one header record, then one record per
// conformation with nonzero weight.

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "loopsmc/conformation.hpp"
#include "loopsmc/error.hpp"
#include "loopsmc/residue.hpp"

namespace loopsmc {

inline constexpr int kSampleSchemaVersion = 1;

struct SampleFile
{
	std::string label;
	int start = 0;
	std::string sequence;
	std::vector<Conformation> conformations;
};

namespace detail {

inline nlohmann::json real_or_null(double x)
{
	return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

inline double real_from(const nlohmann::json &j)
{
	return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline nlohmann::json opt_angle(const std::optional<double> &a)
{
	return a ? nlohmann::json(*a) : nlohmann::json(nullptr);
}

inline std::optional<double> angle_from(const nlohmann::json &j)
{
	if (j.is_null())
		return std::nullopt;
	return j.get<double>();
}

inline nlohmann::json coords(const std::vector<Vec3> &v)
{
	auto a = nlohmann::json::array();
	for (auto &p : v)
		a.push_back({real_or_null(p.x), real_or_null(p.y), real_or_null(p.z)});
	return a;
}

inline std::vector<Vec3> coords_from(const nlohmann::json &j)
{
	std::vector<Vec3> v;
	for (auto &p : j)
		v.emplace_back(real_from(p.at(0)), real_from(p.at(1)), real_from(p.at(2)));
	return v;
}

} // namespace detail

inline nlohmann::json conformation_json(const Conformation &c)
{
	using nlohmann::json;
	json dih = json::array(), chi = json::array(), sc = json::array();
	std::vector<Vec3> bb = c.backbone_atoms();
	for (size_t k = 0; k < c.sequence.size(); ++k)
	{
		const auto &d = c.dihedrals[k];
		dih.push_back({{"position", c.start + int(k)},
		               {"phi", detail::opt_angle(d.phi)},
		               {"psi", detail::opt_angle(d.psi)},
		               {"omega", detail::opt_angle(d.omega)}});
		chi.push_back({{"position", c.start + int(k)}, {"chi", k < c.chi.size() ? c.chi[k] : std::vector<double>{}}});
		sc.push_back(detail::coords(k < c.side_chains.size() ? c.side_chains[k] : std::vector<Vec3>{}));
	}
	return {{"id", c.id},
	        {"label", c.label},
	        {"weight", c.weight},
	        {"energy", c.energy},
	        {"increments", c.increments},
	        {"bridge", c.bridge < 0 ? json(nullptr) : json(c.start + c.bridge)},
	        {"dihedrals", dih},
	        {"chi", chi},
	        {"backbone", detail::coords(bb)},
	        {"side_chains", sc}};
}

/// Header line followed by one line per nonzero-weight conformation.
inline void write_samples(std::ostream &os, const std::string &label, int start, const std::string &sequence,
                          const std::vector<Conformation> &confs)
{
	nlohmann::json head{{"schema_version", kSampleSchemaVersion},
	                    {"record", "header"},
	                    {"label", label},
	                    {"start", start},
	                    {"end", start + int(sequence.size()) - 1},
	                    {"sequence", sequence}};
	os << head.dump() << '\n';
	for (auto &c : confs)
	{
		if (!(c.weight > 0))
			continue;
		auto j = conformation_json(c);
		j["schema_version"] = kSampleSchemaVersion;
		j["record"] = "sample";
		os << j.dump() << '\n';
	}
}

inline Conformation conformation_from_json(const nlohmann::json &j, int start, const std::vector<AminoAcid> &seq)
{
	Conformation c;
	c.start = start;
	c.sequence = seq;
	c.id = j.at("id").get<uint64_t>();
	c.label = j.at("label").get<std::string>();
	c.weight = j.at("weight").get<double>();
	c.energy = j.at("energy").get<double>();
	c.increments = j.at("increments").get<std::vector<double>>();
	c.bridge = j.at("bridge").is_null() ? -1 : j.at("bridge").get<int>() - start;
	const size_t l = seq.size();
	auto &dih = j.at("dihedrals");
	auto &chi = j.at("chi");
	auto &sc = j.at("side_chains");
	if (dih.size() != l || chi.size() != l || sc.size() != l)
		throw DataError("sample record " + std::to_string(c.id) + " does not match the segment length");
	for (size_t k = 0; k < l; ++k)
	{
		c.dihedrals.push_back({detail::angle_from(dih[k].at("phi")), detail::angle_from(dih[k].at("psi")),
		                       detail::angle_from(dih[k].at("omega"))});
		c.chi.push_back(chi[k].at("chi").get<std::vector<double>>());
		c.side_chains.push_back(detail::coords_from(sc[k]));
	}
	auto bb = detail::coords_from(j.at("backbone"));
	if (bb.size() != 4 * l)
		throw DataError("sample record " + std::to_string(c.id) + " has " + std::to_string(bb.size()) +
		                " backbone atoms, expected " + std::to_string(4 * l));
	c.backbone.resize(l);
	for (size_t k = 0; k < l; ++k)
		for (size_t a = 0; a < 4; ++a)
			c.backbone[k][a] = bb[4 * k + a];
	return c;
}

inline SampleFile read_samples(std::istream &in, const std::string &what = "samples")
{
	SampleFile f;
	std::string line;
	size_t lineno = 0;
	bool have_header = false;
	std::vector<AminoAcid> seq;
	while (std::getline(in, line))
	{
		++lineno;
		if (line.empty())
			continue;
		nlohmann::json j;
		try
		{
			j = nlohmann::json::parse(line);
		}
		catch (const nlohmann::json::exception &e)
		{
			throw DataError(what + ":" + std::to_string(lineno) + ": invalid JSON (" + e.what() + ")");
		}
		try
		{
			if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSampleSchemaVersion)
				throw DataError(what + ":" + std::to_string(lineno) + ": unsupported schema_version");
			if (!have_header)
			{
				if (j.value("record", "") != "header")
					throw DataError(what + ":" + std::to_string(lineno) + ": missing header record");
				f.label = j.at("label").get<std::string>();
				f.start = j.at("start").get<int>();
				f.sequence = j.at("sequence").get<std::string>();
				seq = parse_sequence(f.sequence);
				have_header = true;
				continue;
			}
			f.conformations.push_back(conformation_from_json(j, f.start, seq));
		}
		catch (const nlohmann::json::exception &e)
		{
			throw DataError(what + ":" + std::to_string(lineno) + ": malformed record (" + e.what() + ")");
		}
		catch (const InvalidArgument &e)
		{
			throw DataError(what + ":" + std::to_string(lineno) + ": " + e.what());
		}
	}
	if (!have_header)
		throw DataError(what + ": empty sample file");
	return f;
}

inline SampleFile load_samples(const std::string &path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw DataError("cannot read sample file " + path);
	return read_samples(in, path);
}

} // namespace loopsmc
