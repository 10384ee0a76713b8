#pragma once

// Analytic tripeptide loop closure.
//
// Three consecutive bridge residues are solved for their six backbone dihedrals
// (phi, psi of each) so that the chain grown from the left anchor meets the
// fixed right anchor with ideal bond lengths and angles. The Cα atoms of the
// bridge act as pivots; the two peptide units between them are rigid bodies.
// Eliminating the two body rotations from the three bond-angle constraints
// leaves one polynomial of degree 16 in the half-angle tangent of the pivot
// triangle rotation.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "loopsmc/error.hpp"
#include "loopsmc/geometry.hpp"
#include "loopsmc/polynomial.hpp"

namespace loopsmc {

struct ClosureProblem
{
	/// C_{a-1}, N_a, CA_a: the last three backbone atoms of the left partial chain.
	std::array<Vec3, 3> left_anchor;
	/// CA_{a+2}, C_{a+2}, N_{a+3}: the first three fixed backbone atoms on the right.
	std::array<Vec3, 3> right_anchor;
	/// One-letter codes of residues a, a+1, a+2 (informational; geometry is type independent).
	std::array<char, 3> bridge_types{'G', 'G', 'G'};
	/// Peptide ω between a/a+1 and a+1/a+2, held fixed during the solve.
	std::array<double, 2> omega{180.0, 180.0};

	void validate() const
	{
		std::array<const Vec3 *, 6> pts{&left_anchor[0], &left_anchor[1], &left_anchor[2],
		                                 &right_anchor[0], &right_anchor[1], &right_anchor[2]};
		for (auto *p : pts)
			if (!p->finite())
				throw InvalidArgument("closure anchors must be finite");
		for (size_t i = 0; i < pts.size(); ++i)
			for (size_t j = i + 1; j < pts.size(); ++j)
				if (distance2(*pts[i], *pts[j]) < 1e-12)
					throw InvalidArgument("closure anchors must be mutually non-coincident");
		for (double w : omega)
			if (!std::isfinite(w))
				throw InvalidArgument("closure omega must be finite");
	}
};

struct ClosureSolution
{
	/// phi_a, psi_a, phi_{a+1}, psi_{a+1}, phi_{a+2}, psi_{a+2} in degrees.
	std::array<double, 6> dihedrals{};
	/// Bridge atoms placed by forward construction from the left anchor.
	Vec3 c0, o0, n1, ca1, c1, o1, n2;
};

struct JunctionReport
{
	double ca_error = 0;    // rebuilt CA_{a+2} vs the fixed one, Å
	double bond_error = 0;  // |N_{a+2}-CA_{a+2}| vs ideal, Å
	double angle_error = 0; // worst of C-N-CA and N-CA-C at the junction, degrees

	bool ok(double bond_tol = 1e-3, double angle_tol = 0.1) const
	{
		return ca_error <= bond_tol && bond_error <= bond_tol && angle_error <= angle_tol;
	}
};

/// Forward-rebuilds the bridge from the left anchor with the given dihedrals and
/// measures how well it meets the right anchor.
inline JunctionReport check_junction(const ClosureProblem &p, const std::array<double, 6> &d,
                                     const IdealGeometry &g)
{
	auto r0 = extend_backbone({p.left_anchor[0], p.left_anchor[1], p.left_anchor[2]},
	                          {d[0], d[1], p.omega[0]}, Direction::left, g);
	auto r1 = extend_backbone({r0.carbonyl_c, r0.amide_n, r0.alpha_c}, {d[2], d[3], p.omega[1]},
	                          Direction::left, g);
	// residue a+2: place C from phi and compare with the fixed CA/C
	const Vec3 &ca2 = p.right_anchor[0], &c2 = p.right_anchor[1], &n3 = p.right_anchor[2];
	JunctionReport rep;
	rep.ca_error = distance(r1.alpha_c, ca2);
	rep.bond_error = std::abs(distance(r1.amide_n, ca2) - g.n_ca);
	double a1 = std::abs(bond_angle(r1.carbonyl_c, r1.amide_n, ca2) - g.c_n_ca);
	double a2 = std::abs(bond_angle(r1.amide_n, ca2, c2) - g.n_ca_c);
	rep.angle_error = std::max(a1, a2);
	auto phi2 = dihedral_angle(r1.carbonyl_c, r1.amide_n, ca2, c2);
	auto psi2 = dihedral_angle(r1.amide_n, ca2, c2, n3);
	if (!phi2 || !psi2 || angle_distance(*phi2, d[4]) > 1e-3 || angle_distance(*psi2, d[5]) > 1e-3)
		rep.angle_error = std::max(rep.angle_error, 180.0);
	return rep;
}

namespace detail {

/// a + b cos t + c sin t = 0, all solutions t in radians.
inline int solve_trig(double a, double b, double c, double out[2])
{
	double r = std::hypot(b, c);
	if (!(r > 1e-14))
		return 0;
	double q = -a / r;
	if (q > 1.0 + 1e-9 || q < -1.0 - 1e-9)
		return 0;
	q = std::clamp(q, -1.0, 1.0);
	double base = std::atan2(c, b), off = std::acos(q);
	out[0] = base + off;
	if (off < 1e-12)
		return 1;
	out[1] = base - off;
	return 2;
}

using Mat3 = std::array<std::array<double, 3>, 3>; // [row basis][col basis], basis {1, cos, sin}

inline double eval_mat(const Mat3 &m, double s, double t)
{
	double bs[3] = {1.0, std::cos(s), std::sin(s)}, bt[3] = {1.0, std::cos(t), std::sin(t)};
	double r = 0;
	for (int i = 0; i < 3; ++i)
		for (int j = 0; j < 3; ++j)
			r += m[i][j] * bs[i] * bt[j];
	return r;
}

inline double eval_mat_ds(const Mat3 &m, double s, double t)
{
	double bs[3] = {0.0, -std::sin(s), std::cos(s)}, bt[3] = {1.0, std::cos(t), std::sin(t)};
	double r = 0;
	for (int i = 0; i < 3; ++i)
		for (int j = 0; j < 3; ++j)
			r += m[i][j] * bs[i] * bt[j];
	return r;
}

inline double eval_mat_dt(const Mat3 &m, double s, double t)
{
	double bs[3] = {1.0, std::cos(s), std::sin(s)}, bt[3] = {0.0, -std::sin(t), std::cos(t)};
	double r = 0;
	for (int i = 0; i < 3; ++i)
		for (int j = 0; j < 3; ++j)
			r += m[i][j] * bs[i] * bt[j];
	return r;
}

/// Rewrites sum M[i][j] b_i(s) b_j(t) in half-angle tangents, times (1+y^2)(1+x^2).
/// Result Q[k][l] multiplies y^k x^l.
inline std::array<std::array<double, 3>, 3> half_angle(const Mat3 &m)
{
	static const double P[3][3] = {{1, 0, 1}, {1, 0, -1}, {0, 2, 0}};
	std::array<std::array<double, 3>, 3> q{};
	for (int i = 0; i < 3; ++i)
		for (int j = 0; j < 3; ++j)
			for (int k = 0; k < 3; ++k)
				for (int l = 0; l < 3; ++l)
					q[k][l] += m[i][j] * P[i][k] * P[j][l];
	return q;
}

/// A rigid peptide body seen from one pivot: points at height h along the pivot
/// axis and radius rho around it.
struct BodyPoint
{
	double h, rho;
};

} // namespace detail

/// Solves the six bridge dihedrals. Returns 0–16 verified solutions sorted by the first dihedral.
inline std::vector<ClosureSolution> solve_closure(const ClosureProblem &prob, const IdealGeometry &g)
{
	using namespace detail;
	prob.validate();

	const Vec3 &n0 = prob.left_anchor[1], &P1 = prob.left_anchor[2];
	const Vec3 &P3 = prob.right_anchor[0], &c2fix = prob.right_anchor[1];

	// Body A: CA_a, C_a, N_{a+1}, CA_{a+1}. Body B: CA_{a+1}, C_{a+1}, N_{a+2}, CA_{a+2}.
	auto body = [&](double omega, Vec3 &ca, Vec3 &c, Vec3 &n, Vec3 &ca_next) {
		ca = Vec3(0, 0, 0);
		c = Vec3(g.ca_c, 0, 0);
		n = place_atom(Vec3(-1, 1, 0), ca, c, g.c_n, g.ca_c_n, 0.0);
		ca_next = place_atom(ca, c, n, g.n_ca, g.c_n_ca, omega);
	};
	Vec3 aca, ac, an, aca2, bca, bc, bn, bca2;
	body(prob.omega[0], aca, ac, an, aca2);
	body(prob.omega[1], bca, bc, bn, bca2);

	auto decompose = [](const Vec3 &origin, const Vec3 &axis, const Vec3 &p, Vec3 &radial) {
		Vec3 v = p - origin;
		double h = dot(v, axis);
		radial = v - axis * h;
		return BodyPoint{h, norm(radial)};
	};
	auto signed_angle = [](const Vec3 &from, const Vec3 &to, const Vec3 &axis) {
		return std::atan2(dot(cross(from, to), axis), dot(from, to));
	};

	// Body A from pivot P1 (its CA_a end).
	double d12 = distance(aca, aca2);
	Vec3 wa = (aca2 - aca) * (1.0 / d12), rc, rn;
	BodyPoint pC1 = decompose(aca, wa, ac, rc);
	BodyPoint pN2 = decompose(aca, wa, an, rn);
	double deltaA = signed_angle(rc, rn, wa);

	// Body B from pivot P3 (its CA_{a+2} end).
	double d23 = distance(bca, bca2);
	Vec3 wb = (bca - bca2) * (1.0 / d23), rn3, rc2;
	BodyPoint pN3 = decompose(bca2, wb, bn, rn3);
	BodyPoint pC2 = decompose(bca2, wb, bc, rc2);
	double deltaB = signed_angle(rn3, rc2, wb);

	double d13 = distance(P1, P3);
	if (d13 > d12 + d23 || d13 < std::abs(d12 - d23) || d13 < 1e-9)
		return {};

	// Pivot triangle: angles at P1 and P3.
	double cosG1 = (d12 * d12 + d13 * d13 - d23 * d23) / (2 * d12 * d13);
	double cosG3 = (d23 * d23 + d13 * d13 - d12 * d12) / (2 * d23 * d13);
	double sG1 = std::sqrt(std::max(0.0, 1 - cosG1 * cosG1)), cG1 = cosG1;
	double sG3 = std::sqrt(std::max(0.0, 1 - cosG3 * cosG3)), cG3 = cosG3;

	Vec3 a = (P3 - P1) * (1.0 / d13);
	Vec3 u = normalized(n0 - P1);
	Vec3 bperp = u - a * dot(u, a);
	if (norm(bperp) < 1e-9)
		bperp = cross(a, std::abs(a.x) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0));
	Vec3 b = normalized(bperp);
	Vec3 c = cross(a, b);
	Vec3 v = normalized(c2fix - P3);

	const double cosT = std::cos(deg2rad(g.n_ca_c));

	// E1(sigmaA, psi): angle N_a - CA_a - C_a.
	double ua = dot(u, a), ub = dot(u, b), uc = dot(u, c);
	Mat3 M1{};
	M1[0] = {pC1.h * cG1 * ua - g.ca_c * cosT, pC1.h * sG1 * ub, pC1.h * sG1 * uc};
	M1[1] = {pC1.rho * sG1 * ua, -pC1.rho * cG1 * ub, -pC1.rho * cG1 * uc};
	M1[2] = {0.0, -pC1.rho * uc, pC1.rho * ub};

	// E3(sigmaB, psi): angle N_{a+2} - CA_{a+2} - C_{a+2}.
	double va = -dot(v, a), vb = dot(v, b), vc = dot(v, c);
	Mat3 M3{};
	M3[0] = {pN3.h * cG3 * va - g.n_ca * cosT, pN3.h * sG3 * vb, pN3.h * sG3 * vc};
	M3[1] = {pN3.rho * sG3 * va, -pN3.rho * cG3 * vb, -pN3.rho * cG3 * vc};
	M3[2] = {0.0, pN3.rho * vc, -pN3.rho * vb};

	// E2(sigmaA, sigmaB): angle N_{a+1} - CA_{a+1} - C_{a+1}; independent of psi.
	Vec3 w0 = a * cG1 + b * sG1, ep0 = a * sG1 - b * cG1, en0 = -c;
	Vec3 wp0 = a * (-cG3) + b * sG3, epp0 = a * (-sG3) - b * cG3, enp0 = c;
	std::array<Vec3, 3> A{w0 * (pN2.h - d12),
	                      (ep0 * std::cos(deltaA) + en0 * std::sin(deltaA)) * pN2.rho,
	                      (ep0 * -std::sin(deltaA) + en0 * std::cos(deltaA)) * pN2.rho};
	std::array<Vec3, 3> B{wp0 * (pC2.h - d23),
	                      (epp0 * std::cos(deltaB) + enp0 * std::sin(deltaB)) * pC2.rho,
	                      (epp0 * -std::sin(deltaB) + enp0 * std::cos(deltaB)) * pC2.rho};
	Mat3 M2{};
	for (int i = 0; i < 3; ++i)
		for (int j = 0; j < 3; ++j)
			M2[i][j] = dot(A[i], B[j]);
	M2[0][0] -= g.n_ca * g.ca_c * cosT;

	// Polynomial elimination. x = tan(psi/2), y = tan(sigmaA/2), z = tan(sigmaB/2).
	auto Q1 = half_angle(M1); // y^k x^l
	auto Q2 = half_angle(M2); // y^k z^l
	auto Q3 = half_angle(M3); // z^k x^l
	poly::Poly f[3], gz[3], h[3];
	for (int k = 0; k < 3; ++k)
	{
		f[k] = {Q1[k][0], Q1[k][1], Q1[k][2]};
		gz[k] = {Q2[k][0], Q2[k][1], Q2[k][2]};
		h[k] = {Q3[k][0], Q3[k][1], Q3[k][2]};
	}
	// Resultant in y of f(y; x) and g(y; z): a bivariate polynomial R(x, z).
	auto fg = [&](int i, int j) { return poly::outer(f[i], gz[j]); };
	auto diff = [&](int i, int j) { return poly::bi_add(fg(i, j), fg(j, i), -1.0); };
	poly::BiPoly t20 = diff(2, 0), t21 = diff(2, 1), t10 = diff(1, 0);
	poly::BiPoly R = poly::bi_add(poly::bi_mul(t20, t20), poly::bi_mul(t21, t10), -1.0);

	// Resultant in z of R (degree 4) and h (degree 2) via the Sylvester matrix.
	std::array<poly::Poly, 5> r;
	for (int j = 0; j < 5; ++j)
		r[size_t(j)] = poly::z_coefficient(R, size_t(j));
	std::vector<std::vector<poly::Poly>> S(6, std::vector<poly::Poly>(6, poly::Poly{}));
	for (int row = 0; row < 2; ++row)
		for (int k = 0; k <= 4; ++k)
			S[size_t(row)][size_t(row + k)] = r[size_t(4 - k)];
	for (int row = 0; row < 4; ++row)
		for (int k = 0; k <= 2; ++k)
			S[size_t(2 + row)][size_t(row + k)] = h[2 - k];
	poly::Poly res = poly::determinant(S);
	res.resize(17, 0.0);
	double scale = 0;
	for (double co : res)
		scale = std::max(scale, std::abs(co));
	if (!(scale > 0) || !std::isfinite(scale))
		return {};
	for (auto &co : res)
		co /= scale;

	std::vector<double> psis;
	for (double x : poly::real_roots(res, -1.0, 1.0))
		psis.push_back(2.0 * std::atan(x));
	poly::Poly rev(res.rbegin(), res.rend());
	for (double s : poly::real_roots(rev, -1.0, 1.0))
	{
		if (std::abs(s) < 1e-300)
			continue;
		psis.push_back(2.0 * std::atan(1.0 / s));
	}
	psis.push_back(kPi); // x = ∞ is not representable above

	std::vector<ClosureSolution> out;
	for (double psi0 : psis)
	{
		double sa[2], sb[2];
		double c1[3], c3[3];
		for (int i = 0; i < 3; ++i)
		{
			c1[i] = M1[size_t(i)][0] + M1[size_t(i)][1] * std::cos(psi0) + M1[size_t(i)][2] * std::sin(psi0);
			c3[i] = M3[size_t(i)][0] + M3[size_t(i)][1] * std::cos(psi0) + M3[size_t(i)][2] * std::sin(psi0);
		}
		int na = solve_trig(c1[0], c1[1], c1[2], sa);
		int nb = solve_trig(c3[0], c3[1], c3[2], sb);
		for (int ia = 0; ia < na; ++ia)
			for (int ib = 0; ib < nb; ++ib)
			{
				double psi = psi0, sA = sa[ia], sB = sb[ib];
				if (std::abs(eval_mat(M2, sA, sB)) > 5e-2)
					continue;
				// Newton polish of the three constraints.
				bool converged = false;
				for (int it = 0; it < 20; ++it)
				{
					double F[3] = {eval_mat(M1, sA, psi), eval_mat(M2, sA, sB), eval_mat(M3, sB, psi)};
					if (std::abs(F[0]) + std::abs(F[1]) + std::abs(F[2]) < 1e-13)
					{
						converged = true;
						break;
					}
					// unknowns (sA, sB, psi)
					double J[3][3] = {{eval_mat_ds(M1, sA, psi), 0.0, eval_mat_dt(M1, sA, psi)},
					                  {eval_mat_ds(M2, sA, sB), eval_mat_dt(M2, sA, sB), 0.0},
					                  {0.0, eval_mat_ds(M3, sB, psi), eval_mat_dt(M3, sB, psi)}};
					double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
					             J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
					             J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
					if (!(std::abs(det) > 1e-300))
						break;
					auto solve_col = [&](int col) {
						double m[3][3];
						for (int i = 0; i < 3; ++i)
							for (int j = 0; j < 3; ++j)
								m[i][j] = (j == col) ? F[i] : J[i][j];
						return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
						        m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
						        m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])) /
						       det;
					};
					double dA = solve_col(0), dB = solve_col(1), dP = solve_col(2);
					sA -= dA;
					sB -= dB;
					psi -= dP;
					if (std::abs(dA) + std::abs(dB) + std::abs(dP) < 1e-15)
					{
						converged = true;
						break;
					}
				}
				double resid = std::abs(eval_mat(M1, sA, psi)) + std::abs(eval_mat(M2, sA, sB)) +
				               std::abs(eval_mat(M3, sB, psi));
				if (!converged && resid > 1e-9)
					continue;

				// Positions from (psi, sA, sB).
				Vec3 rr = b * std::cos(psi) + c * std::sin(psi);
				Vec3 w = a * cG1 + rr * sG1, ep = a * sG1 - rr * cG1, en = cross(rr, a);
				Vec3 ap = -a;
				Vec3 wp = ap * cG3 + rr * sG3, epp = ap * sG3 - rr * cG3, enp = cross(rr, ap);
				Vec3 P2 = P1 + w * d12;
				Vec3 C0 = P1 + w * pC1.h + (ep * std::cos(sA) + en * std::sin(sA)) * pC1.rho;
				Vec3 N1 = P1 + w * pN2.h + (ep * std::cos(sA + deltaA) + en * std::sin(sA + deltaA)) * pN2.rho;
				Vec3 N2 = P3 + wp * pN3.h + (epp * std::cos(sB) + enp * std::sin(sB)) * pN3.rho;
				Vec3 C1 = P3 + wp * pC2.h + (epp * std::cos(sB + deltaB) + enp * std::sin(sB + deltaB)) * pC2.rho;

				auto t = [](const Vec3 &p1, const Vec3 &p2, const Vec3 &p3, const Vec3 &p4) {
					return dihedral_angle(p1, p2, p3, p4);
				};
				std::array<std::optional<double>, 6> ds{
					t(prob.left_anchor[0], n0, P1, C0), t(n0, P1, C0, N1), t(C0, N1, P2, C1),
					t(N1, P2, C1, N2),                  t(C1, N2, P3, c2fix), t(N2, P3, c2fix, prob.right_anchor[2])};
				ClosureSolution sol;
				bool ok = true;
				for (size_t k = 0; k < 6; ++k)
				{
					if (!ds[k])
					{
						ok = false;
						break;
					}
					sol.dihedrals[k] = *ds[k];
				}
				if (!ok)
					continue;
				if (!check_junction(prob, sol.dihedrals, g).ok())
					continue;
				bool dup = false;
				for (auto &o : out)
				{
					bool same = true;
					for (size_t k = 0; k < 6 && same; ++k)
						same = angle_distance(o.dihedrals[k], sol.dihedrals[k]) < 1e-6;
					if (same)
					{
						dup = true;
						break;
					}
				}
				if (dup)
					continue;
				// Atoms by forward construction so downstream geometry matches extend_backbone exactly.
				auto r0 = extend_backbone({prob.left_anchor[0], n0, P1}, {sol.dihedrals[0], sol.dihedrals[1], prob.omega[0]},
				                          Direction::left, g);
				auto r1 = extend_backbone({r0.carbonyl_c, r0.amide_n, r0.alpha_c},
				                          {sol.dihedrals[2], sol.dihedrals[3], prob.omega[1]}, Direction::left, g);
				sol.c0 = r0.carbonyl_c;
				sol.o0 = r0.carbonyl_o;
				sol.n1 = r0.amide_n;
				sol.ca1 = r0.alpha_c;
				sol.c1 = r1.carbonyl_c;
				sol.o1 = r1.carbonyl_o;
				sol.n2 = r1.amide_n;
				out.push_back(sol);
			}
	}
	std::sort(out.begin(), out.end(), [](const ClosureSolution &x, const ClosureSolution &y) {
		return x.dihedrals < y.dihedrals;
	});
	return out;
}

} // namespace loopsmc
