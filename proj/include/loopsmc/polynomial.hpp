#pragma once

// Dense univariate/bivariate polynomials and real-root isolation on an interval.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace loopsmc::poly {

/// Coefficients in increasing degree order.
using Poly = std::vector<double>;

/// coef[i][j] multiplies x^i z^j.
using BiPoly = std::vector<std::vector<double>>;

inline double eval(const Poly &p, double x)
{
	double r = 0;
	for (size_t i = p.size(); i-- > 0;)
		r = r * x + p[i];
	return r;
}

inline Poly add(const Poly &a, const Poly &b)
{
	Poly r(std::max(a.size(), b.size()), 0.0);
	for (size_t i = 0; i < a.size(); ++i)
		r[i] += a[i];
	for (size_t i = 0; i < b.size(); ++i)
		r[i] += b[i];
	return r;
}

inline Poly scaled(const Poly &a, double s)
{
	Poly r(a);
	for (auto &c : r)
		c *= s;
	return r;
}

inline Poly mul(const Poly &a, const Poly &b)
{
	if (a.empty() || b.empty())
		return {};
	Poly r(a.size() + b.size() - 1, 0.0);
	for (size_t i = 0; i < a.size(); ++i)
		for (size_t j = 0; j < b.size(); ++j)
			r[i + j] += a[i] * b[j];
	return r;
}

inline Poly derivative(const Poly &p)
{
	if (p.size() <= 1)
		return {};
	Poly d(p.size() - 1);
	for (size_t i = 1; i < p.size(); ++i)
		d[i - 1] = p[i] * double(i);
	return d;
}

/// Drops leading coefficients that are negligible relative to the largest one.
inline Poly trimmed(Poly p, double rel = 1e-14)
{
	double m = 0;
	for (double c : p)
		m = std::max(m, std::abs(c));
	while (!p.empty() && std::abs(p.back()) <= rel * m)
		p.pop_back();
	return p;
}

inline BiPoly outer(const Poly &fx, const Poly &gz)
{
	BiPoly r(fx.size(), std::vector<double>(gz.size(), 0.0));
	for (size_t i = 0; i < fx.size(); ++i)
		for (size_t j = 0; j < gz.size(); ++j)
			r[i][j] = fx[i] * gz[j];
	return r;
}

inline BiPoly bi_add(const BiPoly &a, const BiPoly &b, double sb = 1.0)
{
	size_t nx = std::max(a.size(), b.size());
	size_t nz = 0;
	for (auto &row : a)
		nz = std::max(nz, row.size());
	for (auto &row : b)
		nz = std::max(nz, row.size());
	BiPoly r(nx, std::vector<double>(nz, 0.0));
	for (size_t i = 0; i < a.size(); ++i)
		for (size_t j = 0; j < a[i].size(); ++j)
			r[i][j] += a[i][j];
	for (size_t i = 0; i < b.size(); ++i)
		for (size_t j = 0; j < b[i].size(); ++j)
			r[i][j] += sb * b[i][j];
	return r;
}

inline BiPoly bi_mul(const BiPoly &a, const BiPoly &b)
{
	if (a.empty() || b.empty())
		return {};
	size_t az = 0, bz = 0;
	for (auto &row : a)
		az = std::max(az, row.size());
	for (auto &row : b)
		bz = std::max(bz, row.size());
	if (az == 0 || bz == 0)
		return {};
	BiPoly r(a.size() + b.size() - 1, std::vector<double>(az + bz - 1, 0.0));
	for (size_t i = 0; i < a.size(); ++i)
		for (size_t j = 0; j < a[i].size(); ++j)
		{
			if (a[i][j] == 0.0)
				continue;
			for (size_t k = 0; k < b.size(); ++k)
				for (size_t l = 0; l < b[k].size(); ++l)
					r[i + k][j + l] += a[i][j] * b[k][l];
		}
	return r;
}

/// Coefficient of z^j as a polynomial in x.
inline Poly z_coefficient(const BiPoly &p, size_t j)
{
	Poly r(p.size(), 0.0);
	for (size_t i = 0; i < p.size(); ++i)
		if (j < p[i].size())
			r[i] = p[i][j];
	return r;
}

/// Determinant of a square matrix with polynomial entries (exact expansion over column subsets).
inline Poly determinant(const std::vector<std::vector<Poly>> &m)
{
	const size_t n = m.size();
	std::vector<Poly> dp(size_t(1) << n);
	dp[0] = Poly{1.0};
	std::vector<bool> has(size_t(1) << n, false);
	has[0] = true;
	for (uint32_t mask = 0; mask < (1u << n); ++mask)
	{
		if (!has[mask])
			continue;
		size_t row = size_t(__builtin_popcount(mask));
		if (row == n)
			continue;
		for (size_t col = 0; col < n; ++col)
		{
			if (mask & (1u << col))
				continue;
			const Poly &e = m[row][col];
			bool zero = std::all_of(e.begin(), e.end(), [](double c) { return c == 0.0; });
			if (zero)
				continue;
			// parity of used columns to the right of col
			int inv = __builtin_popcount(mask >> (col + 1));
			Poly term = mul(dp[mask], e);
			if (inv & 1)
				term = scaled(term, -1.0);
			uint32_t next = mask | (1u << col);
			dp[next] = add(dp[next], term);
			has[next] = true;
		}
	}
	return dp[(size_t(1) << n) - 1];
}

namespace detail {

inline double refine_root(const Poly &p, const Poly &dp, double a, double b, double fa)
{
	double x = 0.5 * (a + b);
	for (int it = 0; it < 100; ++it)
	{
		double fx = eval(p, x);
		if (fx == 0.0)
			return x;
		if ((fx < 0) == (fa < 0))
		{
			a = x;
			fa = fx;
		}
		else
			b = x;
		double d = eval(dp, x);
		double nx = (d != 0.0) ? x - fx / d : 0.5 * (a + b);
		if (!(nx > a && nx < b))
			nx = 0.5 * (a + b);
		if (std::abs(nx - x) <= 1e-15 * (1.0 + std::abs(x)) || b - a <= 1e-15 * (1.0 + std::abs(x)))
			return nx;
		x = nx;
	}
	return x;
}

inline void roots_in(const Poly &p_in, double lo, double hi, std::vector<double> &out)
{
	Poly p = trimmed(p_in);
	if (p.size() < 2)
		return;
	if (p.size() == 2)
	{
		double r = -p[0] / p[1];
		if (r >= lo && r <= hi)
			out.push_back(r);
		return;
	}
	Poly d = derivative(p);
	std::vector<double> crit;
	roots_in(d, lo, hi, crit);
	std::vector<double> pts;
	pts.reserve(crit.size() + 2);
	pts.push_back(lo);
	for (double c : crit)
		if (c > lo && c < hi)
			pts.push_back(c);
	pts.push_back(hi);
	std::sort(pts.begin(), pts.end());
	for (size_t k = 0; k + 1 < pts.size(); ++k)
	{
		double a = pts[k], b = pts[k + 1];
		double fa = eval(p, a), fb = eval(p, b);
		if (fa == 0.0)
		{
			out.push_back(a);
			continue;
		}
		if (k + 2 == pts.size() && fb == 0.0)
			out.push_back(b);
		if ((fa < 0) != (fb < 0) && fb != 0.0)
			out.push_back(refine_root(p, d, a, b, fa));
	}
}

} // namespace detail

/// Real roots of p in [lo, hi], ascending. Roots of even multiplicity may be missed.
inline std::vector<double> real_roots(const Poly &p, double lo, double hi)
{
	std::vector<double> out;
	detail::roots_in(p, lo, hi, out);
	std::sort(out.begin(), out.end());
	out.erase(std::unique(out.begin(), out.end(),
	                      [](double a, double b) { return std::abs(a - b) <= 1e-13 * (1 + std::abs(a)); }),
	          out.end());
	return out;
}

} // namespace loopsmc::poly
