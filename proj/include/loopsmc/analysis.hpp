#ifndef LOOPSMC_ANALYSIS_HPP
#define LOOPSMC_ANALYSIS_HPP

// Ensemble summaries: backbone RMSD matrices, complete-linkage clustering,
// medoids, per-variant composition and template comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "loopsmc/conformation.hpp"
#include "loopsmc/error.hpp"
#include "loopsmc/geometry.hpp"
#include "loopsmc/resample.hpp"
#include "loopsmc/rng.hpp"

namespace loopsmc {

/// Condensed symmetric matrix (upper triangle, float storage).
class DistanceMatrix
{
  public:
	DistanceMatrix() = default;
	explicit DistanceMatrix(size_t n) : n_(n), d_(n * (n - (n > 0)) / 2, 0.0f) {}

	size_t size() const { return n_; }

	float operator()(size_t i, size_t j) const
	{
		if (i == j)
			return 0.0f;
		return d_[index(std::min(i, j), std::max(i, j))];
	}

	void set(size_t i, size_t j, float v) { d_[index(std::min(i, j), std::max(i, j))] = v; }

  private:
	size_t index(size_t i, size_t j) const { return n_ * i - i * (i + 1) / 2 + j - i - 1; }

	size_t n_ = 0;
	std::vector<float> d_;
};

inline void check_same_segment(const std::vector<Conformation> &s)
{
	for (auto &c : s)
		if (c.start != s.front().start || c.sequence.size() != s.front().sequence.size())
			throw InvalidArgument("conformations cover different segments (" + std::to_string(s.front().start) + "+" +
			                      std::to_string(s.front().sequence.size()) + " vs " + std::to_string(c.start) + "+" +
			                      std::to_string(c.sequence.size()) + ")");
}

/// Pairwise backbone RMSD (N, CA, C, O; no superposition).
inline DistanceMatrix distance_matrix(const std::vector<Conformation> &samples)
{
	check_same_segment(samples);
	const size_t n = samples.size();
	std::vector<std::vector<Vec3>> bb(n);
	for (size_t i = 0; i < n; ++i)
		bb[i] = samples[i].backbone_atoms();
	DistanceMatrix m(n);
#pragma omp parallel for schedule(dynamic, 16)
	for (long long i = 0; i < (long long)n; ++i)
		for (size_t j = size_t(i) + 1; j < n; ++j)
			m.set(size_t(i), j, float(backbone_rmsd(bb[size_t(i)], bb[j])));
	return m;
}

struct Merge
{
	size_t a, b; // slots merged (a < b); slot a survives
	float height;
};

/// Complete-linkage agglomeration. Among equal distances the pair with the
/// smallest (lower, upper) slot is merged first; a cluster's slot is its lowest member.
/// Works on its own copy of the matrix.
inline std::vector<Merge> complete_linkage(DistanceMatrix d)
{
	const size_t n = d.size();
	std::vector<Merge> merges;
	if (n < 2)
		return merges;
	std::vector<char> active(n, 1);
	std::vector<size_t> nn(n);
	std::vector<float> nd(n);
	auto refresh = [&](size_t i) {
		float best = std::numeric_limits<float>::infinity();
		size_t arg = n;
		for (size_t j = 0; j < n; ++j)
			if (j != i && active[j])
			{
				float v = d(i, j);
				if (v < best)
				{
					best = v;
					arg = j;
				}
			}
		nn[i] = arg;
		nd[i] = best;
	};
	for (size_t i = 0; i < n; ++i)
		refresh(i);
	merges.reserve(n - 1);
	auto key = [&](size_t x) { return std::make_pair(std::min(x, nn[x]), std::max(x, nn[x])); };
	for (size_t step = 0; step + 1 < n; ++step)
	{
		size_t bi = n;
		for (size_t i = 0; i < n; ++i)
		{
			if (!active[i])
				continue;
			if (bi == n || nd[i] < nd[bi] || (nd[i] == nd[bi] && key(i) < key(bi)))
				bi = i;
		}
		size_t a = std::min(bi, nn[bi]), b = std::max(bi, nn[bi]);
		merges.push_back({a, b, nd[bi]});
		active[b] = 0;
		for (size_t k = 0; k < n; ++k)
			if (active[k] && k != a)
				d.set(a, k, std::max(d(a, k), d(b, k)));
		refresh(a);
		for (size_t k = 0; k < n; ++k)
			if (active[k] && k != a && (nn[k] == a || nn[k] == b))
				refresh(k);
	}
	return merges;
}

/// Cluster labels 0..k-1 after applying the first n-k merges; clusters are
/// numbered in order of their lowest member.
inline std::vector<int> cut_tree(const std::vector<Merge> &merges, size_t n, size_t k)
{
	if (k < 1 || k > n)
		throw InvalidArgument("cluster count must be between 1 and the sample count (" + std::to_string(n) + ")");
	std::vector<size_t> parent(n);
	for (size_t i = 0; i < n; ++i)
		parent[i] = i;
	auto find = [&](size_t x) {
		while (parent[x] != x)
			x = parent[x] = parent[parent[x]];
		return x;
	};
	for (size_t s = 0; s < n - k; ++s)
		parent[find(merges[s].b)] = find(merges[s].a);
	std::vector<int> label(n, -1);
	std::map<size_t, int> id;
	for (size_t i = 0; i < n; ++i)
	{
		size_t r = find(i);
		auto it = id.find(r);
		if (it == id.end())
			it = id.emplace(r, int(id.size())).first;
		label[i] = it->second;
	}
	return label;
}

inline std::vector<int> hcluster_complete(const DistanceMatrix &m, size_t k)
{
	return cut_tree(complete_linkage(m), m.size(), k);
}

/// Index of each cluster's medoid (minimum summed distance; ties go to the
/// lowest `order` key, by default the index itself).
inline std::vector<size_t> medoids(const std::vector<int> &assignment, const DistanceMatrix &m,
                                   const std::vector<size_t> &order = {})
{
	int k = 0;
	for (int a : assignment)
		k = std::max(k, a + 1);
	std::vector<std::vector<size_t>> members(static_cast<size_t>(k));
	for (size_t i = 0; i < assignment.size(); ++i)
		members[size_t(assignment[i])].push_back(i);
	auto key = [&](size_t i) { return order.empty() ? i : order[i]; };
	std::vector<size_t> out(static_cast<size_t>(k));
	for (size_t c = 0; c < size_t(k); ++c)
	{
		double best = std::numeric_limits<double>::infinity();
		size_t arg = 0;
		for (size_t i : members[c])
		{
			double s = 0;
			for (size_t j : members[c])
				s += m(i, j);
			if (s < best || (s == best && key(i) < key(arg)))
			{
				best = s;
				arg = i;
			}
		}
		out[c] = arg;
	}
	return out;
}

struct SubsampleInfo
{
	std::string label;
	size_t input = 0;    // nonzero-weight samples offered
	size_t retained = 0; // distinct samples clustered
};

struct ClusterRow
{
	std::vector<size_t> n;      // per variant
	std::vector<double> weight; // per variant, normalized within variant
	size_t medoid = 0;          // index into the clustered samples
};

struct ClusterReport
{
	size_t k = 0;
	std::vector<std::string> variants; // order of first appearance
	std::vector<ClusterRow> clusters;
	double min_medoid_rmsd = std::numeric_limits<double>::quiet_NaN(); // NaN when k = 1
	size_t subsample_limit = 0;
	std::vector<SubsampleInfo> subsample;
	std::vector<int> assignment; // per clustered sample
};

/// Per (cluster, variant) counts and weights; weights normalized within each variant.
inline ClusterReport composition_table(const std::vector<int> &assignment, const std::vector<Conformation> &samples)
{
	ClusterReport r;
	std::map<std::string, size_t> vid;
	for (auto &s : samples)
		if (!vid.count(s.label))
		{
			vid[s.label] = r.variants.size();
			r.variants.push_back(s.label);
		}
	int k = 0;
	for (int a : assignment)
		k = std::max(k, a + 1);
	r.k = size_t(k);
	const size_t V = r.variants.size();
	r.clusters.assign(r.k, ClusterRow{std::vector<size_t>(V, 0), std::vector<double>(V, 0.0), 0});
	std::vector<double> total(V, 0.0);
	for (size_t i = 0; i < samples.size(); ++i)
	{
		size_t v = vid[samples[i].label];
		auto &row = r.clusters[size_t(assignment[i])];
		++row.n[v];
		row.weight[v] += samples[i].weight;
		total[v] += samples[i].weight;
	}
	for (auto &row : r.clusters)
		for (size_t v = 0; v < V; ++v)
			if (total[v] > 0)
				row.weight[v] /= total[v];
	r.assignment = assignment;
	return r;
}

/// Reduces one run to at most `limit` distinct samples by optimal resampling
/// (heavy samples kept, the rest stratified); repeated picks are merged.
inline std::vector<Conformation> subsample(const std::vector<Conformation> &run, size_t limit, uint64_t seed,
                                           uint64_t stream)
{
	std::vector<Conformation> pos;
	for (auto &c : run)
		if (c.weight > 0)
			pos.push_back(c);
	if (pos.size() <= limit)
		return pos;
	std::vector<double> w(pos.size());
	for (size_t i = 0; i < pos.size(); ++i)
		w[i] = pos[i].weight;
	Stream rng = make_stream(seed, StreamTag::subsample, stream);
	auto r = resample_optimal(w, limit, rng);
	std::vector<Conformation> out;
	for (size_t q = 0; q < r.index.size(); ++q)
	{
		if (q > 0 && r.index[q] == r.index[q - 1])
		{
			out.back().weight += r.weight[q];
			continue;
		}
		out.push_back(pos[r.index[q]]);
		out.back().weight = r.weight[q];
	}
	return out;
}

struct ClusterOptions
{
	size_t k = 10;
	size_t subsample = 20000; // total across runs, split evenly
	uint64_t seed = 1;
};

struct ClusterResult
{
	ClusterReport report;
	std::vector<Conformation> samples; // the clustered (sub)sample
};

/// Joint clustering of several labeled runs.
inline ClusterResult cluster_runs(const std::vector<std::vector<Conformation>> &runs, const ClusterOptions &opt)
{
	if (runs.empty())
		throw InvalidArgument("no sample sets given");
	if (opt.k < 1)
		throw InvalidArgument("cluster count must be at least 1");
	if (opt.subsample < runs.size())
		throw InvalidArgument("subsample limit is smaller than the number of runs");
	ClusterResult res;
	std::vector<SubsampleInfo> info;
	const size_t per = opt.subsample / runs.size();
	for (size_t r = 0; r < runs.size(); ++r)
	{
		size_t offered = 0;
		for (auto &c : runs[r])
			offered += c.weight > 0;
		auto s = subsample(runs[r], per, opt.seed, r);
		info.push_back({runs[r].empty() ? std::string() : runs[r].front().label, offered, s.size()});
		res.samples.insert(res.samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
	}
	if (res.samples.empty())
		throw InvalidArgument("no samples with nonzero weight");
	if (opt.k > res.samples.size())
		throw InvalidArgument("cluster count " + std::to_string(opt.k) + " exceeds the " +
		                      std::to_string(res.samples.size()) + " clustered samples");
	auto m = distance_matrix(res.samples);
	auto assignment = hcluster_complete(m, opt.k);
	res.report = composition_table(assignment, res.samples);
	// ties among medoids: lowest (id, input position)
	std::vector<size_t> order(res.samples.size());
	{
		std::vector<size_t> idx(res.samples.size());
		for (size_t i = 0; i < idx.size(); ++i)
			idx[i] = i;
		std::stable_sort(idx.begin(), idx.end(),
		                 [&](size_t a, size_t b) { return res.samples[a].id < res.samples[b].id; });
		for (size_t r = 0; r < idx.size(); ++r)
			order[idx[r]] = r;
	}
	auto med = medoids(assignment, m, order);
	for (size_t c = 0; c < med.size(); ++c)
		res.report.clusters[c].medoid = med[c];
	for (size_t a = 0; a < med.size(); ++a)
		for (size_t b = a + 1; b < med.size(); ++b)
		{
			double d = m(med[a], med[b]);
			if (std::isnan(res.report.min_medoid_rmsd) || d < res.report.min_medoid_rmsd)
				res.report.min_medoid_rmsd = d;
		}
	res.report.subsample_limit = opt.subsample;
	res.report.subsample = info;
	return res;
}

/// Two runs of the same segment clustered together, labeled by repetition.
inline ClusterResult repetition_variation(std::vector<Conformation> run1, std::vector<Conformation> run2,
                                          const ClusterOptions &opt, const std::string &label1 = "rep1",
                                          const std::string &label2 = "rep2")
{
	for (auto &c : run1)
		c.label = label1;
	for (auto &c : run2)
		c.label = label2;
	return cluster_runs({run1, run2}, opt);
}

struct TemplateMetrics
{
	double min_rmsd = 0;
	double lowest_energy_rmsd = 0;
	uint64_t min_rmsd_id = 0;
	uint64_t lowest_energy_id = 0;
	size_t samples = 0;
};

/// Minimum backbone RMSD to the template segment, and the RMSD of the
/// lowest-energy sample (ties to the lowest id), over nonzero-weight samples.
inline TemplateMetrics compare_to_template(const std::vector<Conformation> &samples,
                                           const std::vector<Vec3> &template_backbone)
{
	TemplateMetrics t;
	const Conformation *low = nullptr;
	bool first = true;
	for (auto &c : samples)
	{
		if (!(c.weight > 0))
			continue;
		double r = backbone_rmsd(c.backbone_atoms(), template_backbone);
		if (first || r < t.min_rmsd || (r == t.min_rmsd && c.id < t.min_rmsd_id))
		{
			t.min_rmsd = r;
			t.min_rmsd_id = c.id;
		}
		if (!low || c.energy < low->energy || (c.energy == low->energy && c.id < low->id))
		{
			low = &c;
			t.lowest_energy_rmsd = r;
		}
		first = false;
		++t.samples;
	}
	if (!low)
		throw InvalidArgument("no samples with nonzero weight");
	t.lowest_energy_id = low->id;
	return t;
}

} // namespace loopsmc

#endif
