#pragma once

// Optimal resampling (keep the heavy particles, stratify the rest) and
// capped-probability systematic subsampling.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "loopsmc/error.hpp"
#include "loopsmc/rng.hpp"

namespace loopsmc {

/// Solves Σ min(c·w_i, 1) = n for c. Needs more than n positive weights.
/// `capped` receives how many weights satisfy c·w > 1.
inline double solve_threshold(std::span<const double> w, size_t n, size_t *capped = nullptr)
{
	std::vector<double> s;
	s.reserve(w.size());
	for (double x : w)
	{
		if (!(x >= 0) || !std::isfinite(x))
			throw InvalidArgument("weights must be finite and non-negative");
		if (x > 0)
			s.push_back(x);
	}
	if (n == 0 || s.size() <= n)
		throw InvalidArgument("solve_threshold: need more positive weights than the target count");
	std::sort(s.begin(), s.end(), std::greater<>());
	// tail[k] = Σ_{i ≥ k} s_i, accumulated from the small end
	std::vector<double> tail(s.size() + 1, 0.0);
	for (size_t i = s.size(); i-- > 0;)
		tail[i] = tail[i + 1] + s[i];
	for (size_t k = 0; k < n; ++k)
	{
		double c = double(n - k) / tail[k];
		if (c * s[k] <= 1.0)
		{
			if (capped)
				*capped = k;
			return c;
		}
	}
	// unreachable for valid input: k = n - 1 always satisfies the condition eventually
	throw InvalidArgument("solve_threshold: no solution");
}

struct ResampleResult
{
	std::vector<size_t> index;  // ancestor of each output particle, ascending
	std::vector<double> weight; // unnormalized output weights
	double c = 0;               // threshold constant
	size_t kept = 0;            // group-1 count
};

/// Resamples to exactly n particles when more than n weights are positive;
/// otherwise returns every positive-weight particle unchanged.
inline ResampleResult resample_optimal(std::span<const double> w, size_t n, Stream &rng)
{
	ResampleResult r;
	size_t positive = size_t(std::count_if(w.begin(), w.end(), [](double x) { return x > 0; }));
	if (positive <= n)
	{
		for (size_t i = 0; i < w.size(); ++i)
			if (w[i] > 0)
			{
				r.index.push_back(i);
				r.weight.push_back(w[i]);
			}
		r.kept = positive;
		return r;
	}
	double total = 0;
	for (double x : w)
		total += x;
	std::vector<double> p(w.size());
	for (size_t i = 0; i < w.size(); ++i)
		p[i] = w[i] / total;
	size_t k = 0;
	double c = solve_threshold(p, n, &k);
	r.c = c;
	// group 1: the k largest (ties resolved by index)
	std::vector<size_t> order(w.size());
	std::iota(order.begin(), order.end(), 0);
	std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return p[a] > p[b]; });
	// weights sitting exactly on the threshold (c·w = 1) also belong to group 1
	while (k < n && c * p[order[k]] >= 1.0 - 1e-12)
		++k;
	std::vector<char> heavy(w.size(), 0);
	for (size_t i = 0; i < k; ++i)
		heavy[order[i]] = 1;
	r.kept = k;
	// group 2: stratified draws on the cumulative c·w scale
	size_t draws = n - k;
	std::vector<size_t> picked;
	picked.reserve(draws);
	{
		double cum = 0;
		size_t j = 0;
		double u = (double(j) + rng.uniform());
		size_t last = w.size();
		for (size_t i = 0; i < w.size() && j < draws; ++i)
		{
			if (heavy[i] || p[i] <= 0)
				continue;
			last = i;
			cum += c * p[i];
			while (j < draws && u < cum)
			{
				picked.push_back(i);
				++j;
				if (j < draws)
					u = double(j) + rng.uniform();
			}
		}
		// rounding can leave the final stratum unassigned
		while (picked.size() < draws)
			picked.push_back(last);
	}
	size_t g = 0;
	for (size_t i = 0; i < w.size(); ++i)
	{
		if (heavy[i])
		{
			r.index.push_back(i);
			r.weight.push_back(p[i]);
		}
		while (g < picked.size() && picked[g] == i)
		{
			r.index.push_back(i);
			r.weight.push_back(1.0 / c);
			++g;
		}
	}
	return r;
}

/// Chooses at most n distinct indices with inclusion probability min(c·w_i, 1)
/// (systematic sampling, one uniform). Zero weights are never chosen; when at
/// most n weights are positive all of them are returned. Ascending order.
inline std::vector<size_t> sample_capped(std::span<const double> w, size_t n, double u)
{
	std::vector<size_t> out;
	size_t positive = 0;
	for (double x : w)
		positive += x > 0;
	if (positive <= n)
	{
		for (size_t i = 0; i < w.size(); ++i)
			if (w[i] > 0)
				out.push_back(i);
		return out;
	}
	double c = solve_threshold(w, n);
	double cum = 0, pos = u;
	size_t last = 0;
	for (size_t i = 0; i < w.size() && out.size() < n; ++i)
	{
		if (!(w[i] > 0))
			continue;
		last = i;
		cum += std::min(1.0, c * w[i]);
		if (pos < cum)
		{
			out.push_back(i);
			pos += 1.0;
		}
	}
	if (out.size() < n && (out.empty() || out.back() != last))
		out.push_back(last);
	return out;
}

/// Draws one index with probability ∝ w.
inline size_t sample_one(std::span<const double> w, double u)
{
	double total = 0;
	for (double x : w)
		total += x;
	if (!(total > 0))
		throw InvalidArgument("sample_one: all weights are zero");
	double t = u * total, cum = 0;
	size_t last = 0;
	for (size_t i = 0; i < w.size(); ++i)
	{
		if (!(w[i] > 0))
			continue;
		cum += w[i];
		last = i;
		if (t < cum)
			return i;
	}
	return last;
}

/// Effective sample size 1/Σ p_i² of normalized weights.
inline double effective_sample_size(std::span<const double> w)
{
	double s = 0, s2 = 0;
	for (double x : w)
	{
		s += x;
		s2 += x * x;
	}
	return s2 > 0 ? s * s / s2 : 0.0;
}

} // namespace loopsmc
