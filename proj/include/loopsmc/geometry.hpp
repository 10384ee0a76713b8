#pragma once

// Cartesian / internal-coordinate conversions for protein backbones.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>

#include "loopsmc/error.hpp"

namespace loopsmc {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

inline constexpr double deg2rad(double d) { return d * kPi / 180.0; }
inline constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

/// Wraps an angle in degrees into (-180, 180].
inline double wrap_degrees(double a)
{
	a = std::fmod(a, 360.0);
	if (a <= -180.0)
		a += 360.0;
	else if (a > 180.0)
		a -= 360.0;
	return a;
}

/// Smallest absolute difference between two angles, in degrees.
inline double angle_distance(double a, double b)
{
	return std::abs(wrap_degrees(a - b));
}

struct Vec3
{
	double x = 0, y = 0, z = 0;

	constexpr Vec3() = default;
	constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

	constexpr Vec3 &operator+=(const Vec3 &o) { x += o.x; y += o.y; z += o.z; return *this; }
	constexpr Vec3 &operator-=(const Vec3 &o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
	constexpr Vec3 &operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

	friend constexpr Vec3 operator+(Vec3 a, const Vec3 &b) { return a += b; }
	friend constexpr Vec3 operator-(Vec3 a, const Vec3 &b) { return a -= b; }
	friend constexpr Vec3 operator-(const Vec3 &a) { return {-a.x, -a.y, -a.z}; }
	friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
	friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }

	friend constexpr bool operator==(const Vec3 &, const Vec3 &) = default;

	bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

using Coord3 = Vec3;

inline constexpr double dot(const Vec3 &a, const Vec3 &b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline constexpr Vec3 cross(const Vec3 &a, const Vec3 &b)
{
	return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3 &a) { return std::sqrt(dot(a, a)); }
inline constexpr double norm2(const Vec3 &a) { return dot(a, a); }
inline double distance(const Vec3 &a, const Vec3 &b) { return norm(a - b); }
inline constexpr double distance2(const Vec3 &a, const Vec3 &b) { return norm2(a - b); }

inline Vec3 normalized(const Vec3 &a) { return a * (1.0 / norm(a)); }

/// Bond angle a-b-c in degrees.
inline double bond_angle(const Vec3 &a, const Vec3 &b, const Vec3 &c)
{
	Vec3 u = a - b, v = c - b;
	double cosang = dot(u, v) / (norm(u) * norm(v));
	return rad2deg(std::acos(std::clamp(cosang, -1.0, 1.0)));
}

/// Signed torsion about the p2-p3 axis (IUPAC sign convention), in (-180, 180].
/// Returns nullopt when three consecutive points are collinear.
inline std::optional<double> dihedral_angle(const Vec3 &p1, const Vec3 &p2, const Vec3 &p3, const Vec3 &p4)
{
	Vec3 b0 = p1 - p2, b1 = p3 - p2, b2 = p4 - p3;
	double l1 = norm(b1);
	if (!(l1 > 1e-12))
		return std::nullopt;
	b1 *= 1.0 / l1;
	Vec3 v = b0 - b1 * dot(b0, b1);
	Vec3 w = b2 - b1 * dot(b2, b1);
	double nv = norm(v), nw = norm(w);
	if (!(nv > 1e-12 * (1 + norm(b0))) || !(nw > 1e-12 * (1 + norm(b2))))
		return std::nullopt;
	double x = dot(v, w);
	double y = dot(cross(b1, v), w);
	return wrap_degrees(rad2deg(std::atan2(y, x)));
}

/// Dihedral for geometry known to be non-degenerate; throws otherwise.
inline double torsion(const Vec3 &p1, const Vec3 &p2, const Vec3 &p3, const Vec3 &p4)
{
	auto t = dihedral_angle(p1, p2, p3, p4);
	if (!t)
		throw GeometryError("degenerate torsion: collinear points");
	return *t;
}

/// Places atom d such that |cd| = bond, angle(b,c,d) = angle and torsion(a,b,c,d) = tors
/// (natural extension reference frame construction).
inline Vec3 place_atom(const Vec3 &a, const Vec3 &b, const Vec3 &c, double bond, double angle_deg, double torsion_deg)
{
	Vec3 bc = normalized(c - b);
	Vec3 n = cross(b - a, bc);
	double nn = norm(n);
	if (!(nn > 1e-12))
		throw GeometryError("degenerate predecessor geometry in atom placement");
	n *= 1.0 / nn;
	Vec3 m = cross(n, bc);
	double th = deg2rad(angle_deg), ph = deg2rad(torsion_deg);
	double d2x = -bond * std::cos(th);
	double d2y = bond * std::sin(th) * std::cos(ph);
	double d2z = bond * std::sin(th) * std::sin(ph);
	return c + bc * d2x + m * d2y + n * d2z;
}

/// Ideal peptide backbone geometry (lengths in Å, angles in degrees).
struct IdealGeometry
{
	double n_ca = 1.458;
	double ca_c = 1.525;
	double c_n = 1.329;
	double c_o = 1.231;
	double n_ca_c = 111.2;
	double ca_c_n = 116.2;
	double c_n_ca = 121.7;
	double ca_c_o = 120.5;

	/// N-C-O angle implied by a planar carbonyl carbon.
	double n_c_o() const { return 360.0 - ca_c_n - ca_c_o; }

	static IdealGeometry parse(std::istream &in)
	{
		IdealGeometry g;
		const std::map<std::string, double IdealGeometry::*> keys{
			{"n_ca", &IdealGeometry::n_ca},     {"ca_c", &IdealGeometry::ca_c},
			{"c_n", &IdealGeometry::c_n},       {"c_o", &IdealGeometry::c_o},
			{"n_ca_c", &IdealGeometry::n_ca_c}, {"ca_c_n", &IdealGeometry::ca_c_n},
			{"c_n_ca", &IdealGeometry::c_n_ca}, {"ca_c_o", &IdealGeometry::ca_c_o}};
		std::string line;
		int lineno = 0;
		while (std::getline(in, line))
		{
			++lineno;
			auto hash = line.find('#');
			if (hash != std::string::npos)
				line.erase(hash);
			std::istringstream ls(line);
			std::string key;
			double value;
			if (!(ls >> key))
				continue;
			if (auto eq = key.find('='); eq != std::string::npos)
			{
				std::string rest = key.substr(eq + 1);
				key.erase(eq);
				if (rest.empty())
					ls >> rest;
				value = std::stod(rest);
			}
			else
			{
				std::string tok;
				ls >> tok;
				if (tok == "=")
					ls >> tok;
				try
				{
					value = std::stod(tok);
				}
				catch (const std::exception &)
				{
					throw DataError("geometry file line " + std::to_string(lineno) + ": bad value");
				}
			}
			auto it = keys.find(key);
			if (it == keys.end())
				throw DataError("geometry file line " + std::to_string(lineno) + ": unknown key '" + key + "'");
			if (!(value > 0) || !std::isfinite(value))
				throw DataError("geometry file: non-positive value for " + key);
			g.*(it->second) = value;
		}
		return g;
	}

	static IdealGeometry load(const std::string &path)
	{
		std::ifstream in(path);
		if (!in)
			throw DataError("cannot open geometry file " + path);
		return parse(in);
	}

	std::string to_text() const
	{
		// shortest round-trip form
		auto r = [](double x) {
			char buf[32];
			auto res = std::to_chars(buf, buf + sizeof buf, x);
			return std::string(buf, res.ptr);
		};
		std::ostringstream os;
		os << "# ideal backbone geometry: bond lengths in angstrom, angles in degrees\n"
		   << "n_ca = " << r(n_ca) << "\nca_c = " << r(ca_c) << "\nc_n = " << r(c_n) << "\nc_o = " << r(c_o)
		   << "\nn_ca_c = " << r(n_ca_c) << "\nca_c_n = " << r(ca_c_n) << "\nc_n_ca = " << r(c_n_ca)
		   << "\nca_c_o = " << r(ca_c_o) << "\n";
		return os.str();
	}
};

/// Backbone dihedral triple in degrees.
struct BackboneDihedrals
{
	double phi = -180.0, psi = 180.0, omega = 180.0;

	bool valid() const
	{
		auto ok = [](double a) { return std::isfinite(a) && a > -180.0 && a <= 180.0; };
		return ok(phi) && ok(psi) && ok(omega);
	}
};

enum class Direction
{
	left,  // grows toward the C terminus from the left anchor
	right  // grows toward the N terminus from the right anchor
};

/// Atoms placed by one growth step.
///
/// Left growth of residue i uses (phi_i, psi_i, omega_i) on the predecessors
/// (C_{i-1}, N_i, CA_i) and places C_i, O_i, N_{i+1}, CA_{i+1}.
/// Right growth of residue j uses (psi_j, phi_j, omega_{j-1}) on the predecessors
/// (N_{j+1}, C_j, CA_j) and places N_j, C_{j-1}, O_{j-1}, CA_{j-1}.
struct PlacedBackbone
{
	Vec3 carbonyl_c; // C_i (left) or C_{j-1} (right)
	Vec3 carbonyl_o; // O_i (left) or O_{j-1} (right)
	Vec3 amide_n;    // N_{i+1} (left) or N_j (right)
	Vec3 alpha_c;    // CA_{i+1} (left) or CA_{j-1} (right)
};

/// The three frontier atoms a growth step builds from, in bonded order away from the chain end.
/// Left: (C_{i-1}, N_i, CA_i). Right: (N_{j+1}, C_j, CA_j).
struct GrowthFrame
{
	Vec3 a, b, c;
};

inline Vec3 place_carbonyl_oxygen(const Vec3 &ca, const Vec3 &c, const Vec3 &n_next, const IdealGeometry &g)
{
	return place_atom(ca, n_next, c, g.c_o, g.n_c_o(), 180.0);
}

inline PlacedBackbone extend_backbone(const GrowthFrame &prev, const BackboneDihedrals &d, Direction dir,
                                      const IdealGeometry &g)
{
	PlacedBackbone out;
	if (dir == Direction::left)
	{
		const Vec3 &c_prev = prev.a, &n = prev.b, &ca = prev.c;
		out.carbonyl_c = place_atom(c_prev, n, ca, g.ca_c, g.n_ca_c, d.phi);
		out.amide_n = place_atom(n, ca, out.carbonyl_c, g.c_n, g.ca_c_n, d.psi);
		out.alpha_c = place_atom(ca, out.carbonyl_c, out.amide_n, g.n_ca, g.c_n_ca, d.omega);
		out.carbonyl_o = place_carbonyl_oxygen(ca, out.carbonyl_c, out.amide_n, g);
	}
	else
	{
		const Vec3 &n_next = prev.a, &c = prev.b, &ca = prev.c;
		out.amide_n = place_atom(n_next, c, ca, g.n_ca, g.n_ca_c, d.psi);
		out.carbonyl_c = place_atom(c, ca, out.amide_n, g.c_n, g.c_n_ca, d.phi);
		out.alpha_c = place_atom(ca, out.amide_n, out.carbonyl_c, g.ca_c, g.ca_c_n, d.omega);
		out.carbonyl_o = place_carbonyl_oxygen(out.alpha_c, out.carbonyl_c, out.amide_n, g);
	}
	return out;
}

/// Cα–Cα distance across one peptide unit for a given ω.
inline double ca_ca_span(const IdealGeometry &g, double omega_deg)
{
	Vec3 ca(0, 0, 0), c(g.ca_c, 0, 0);
	Vec3 n_prev = place_atom(Vec3(0, 1, 0), c, ca, g.n_ca, g.n_ca_c, 180.0);
	Vec3 n = place_atom(n_prev, ca, c, g.c_n, g.ca_c_n, 0.0);
	Vec3 ca2 = place_atom(ca, c, n, g.n_ca, g.c_n_ca, omega_deg);
	return distance(ca, ca2);
}

/// Largest Cα–Cα span over all ω (attained at the trans peptide).
inline double max_ca_ca_span(const IdealGeometry &g) { return ca_ca_span(g, 180.0); }

/// Reachable Cα–Cα distance window for a chain of k virtual Cα–Cα links.
///
/// The upper bound is k trans spans. Lower bounds: one link is limited by the cis
/// span; two links by a scan over the middle residue's (φ, ψ) with each ω at 0 or
/// 180 (minus a grid-resolution margin); longer chains by the reverse triangle
/// inequality. Separate lower bounds are kept for all-trans chains.
class ReachabilityTable
{
  public:
	explicit ReachabilityTable(const IdealGeometry &g = {}) : dmax_(max_ca_ca_span(g)), dcis_(ca_ca_span(g, 0.0))
	{
		double lo_any = 1e9, lo_trans = 1e9;
		for (double w0 : {0.0, 180.0})
			for (double w1 : {0.0, 180.0})
				for (int ip = 0; ip < 180; ++ip)
					for (int is = 0; is < 180; ++is)
					{
						double phi = -179.0 + 2.0 * ip, psi = -179.0 + 2.0 * is;
						Vec3 n(0, 0, 0), ca(g.n_ca, 0, 0);
						Vec3 c_prev = place_atom(Vec3(1, 1, 0), ca, n, g.c_n, g.c_n_ca, 0.0);
						Vec3 ca_prev = place_atom(ca, n, c_prev, g.ca_c, g.ca_c_n, w0);
						auto p = extend_backbone({c_prev, n, ca}, {phi, psi, w1}, Direction::left, g);
						double d = distance(ca_prev, p.alpha_c);
						lo_any = std::min(lo_any, d);
						if (w0 == 180.0 && w1 == 180.0)
							lo_trans = std::min(lo_trans, d);
					}
		dmin2_[0] = std::max(0.0, lo_trans - 0.15);
		dmin2_[1] = std::max(0.0, lo_any - 0.15);
	}

	double max_span(int links) const { return links * dmax_; }

	double min_span(int links, bool cis_possible = true) const
	{
		if (links <= 0)
			return 0.0;
		if (links == 1)
			return cis_possible ? dcis_ : dmax_ - 0.05;
		if (links == 2)
			return dmin2_[cis_possible ? 1 : 0];
		return std::max(0.0, min_span(links - 1, cis_possible) - dmax_);
	}

	/// False only when the gap is provably outside the reachable window.
	bool check(const Vec3 &current_end, const Vec3 &target_ca, int links_remaining, bool cis_possible = true) const
	{
		if (links_remaining < 0)
			throw InvalidArgument("reachability_check: negative link count");
		double d = distance(current_end, target_ca);
		constexpr double slack = 1e-6;
		if (links_remaining == 0)
			return d <= slack;
		return d <= max_span(links_remaining) + slack && d >= min_span(links_remaining, cis_possible) - slack;
	}

  private:
	double dmax_, dcis_;
	std::array<double, 2> dmin2_{};
};

/// Whether a chain with `links_remaining` Cα–Cα virtual bonds can join two Cα positions.
/// Assumes trans peptides. Builds the bound table on every call; hot paths keep a
/// ReachabilityTable instead.
inline bool reachability_check(const Vec3 &current_end, const Vec3 &target_ca, int links_remaining,
                               const IdealGeometry &g)
{
	if (links_remaining < 0)
		throw InvalidArgument("reachability_check: negative link count");
	return ReachabilityTable(g).check(current_end, target_ca, links_remaining, false);
}

/// Coordinate RMSD without superposition.
inline double backbone_rmsd(std::span<const Vec3> a, std::span<const Vec3> b)
{
	if (a.size() != b.size())
		throw InvalidArgument("backbone_rmsd: atom count mismatch (" + std::to_string(a.size()) + " vs " +
		                      std::to_string(b.size()) + ")");
	if (a.empty())
		return 0.0;
	double s = 0;
	for (size_t i = 0; i < a.size(); ++i)
		s += distance2(a[i], b[i]);
	return std::sqrt(s / double(a.size()));
}

} // namespace loopsmc
