// End-to-end acceptance checks. One PASS/FAIL line per criterion.
// Usage: loopsmc_acceptance [name...]   (no names = run everything)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "loopsmc/analysis.hpp"
#include "loopsmc/cli.hpp"
#include "loopsmc/resample.hpp"
#include "loopsmc/sample_io.hpp"
#include "loopsmc/sampler.hpp"
#include "loopsmc/tables.hpp"
#include "support.hpp"

using namespace loopsmc;
using namespace loopsmc::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
	bool pass = false;
	std::string detail;
};

fs::path scratch()
{
	static fs::path dir = [] {
		auto d = fs::temp_directory_path() / ("loopsmc_acceptance_" + std::to_string(::getpid()));
		fs::remove_all(d);
		fs::create_directories(d);
		return d;
	}();
	return dir;
}

std::string fmt(const char *f, double x)
{
	char buf[64];
	std::snprintf(buf, sizeof buf, f, x);
	return buf;
}

int cli_run(std::vector<std::string> args)
{
	args.insert(args.begin(), "loopsmc");
	std::ostringstream o, e;
	int rc = cli::run_cli(args, o, e);
	if (rc != 0)
		std::fprintf(stderr, "loopsmc %s -> %d\n%s", args[1].c_str(), rc, e.str().c_str());
	return rc;
}

// Real template segment used by the heavier checks.
const std::string kPdb = LOOPSMC_TEST_DATA "/1A8O.pdb";
const int kStart = 187, kEnd = 199;
const std::string kSeq = "ETLLVQNANPDCK";

std::vector<std::string> sample_cmd(const std::string &out, int particles, int seed, int threads,
                                    const std::string &label = "sample")
{
	return {"sample", "--template", kPdb, "--start", std::to_string(kStart), "--end", std::to_string(kEnd),
	        "--sequence", kSeq, "--particles", std::to_string(particles), "--seed", std::to_string(seed),
	        "--energy-dir", LOOPSMC_DATA_DIR, "--threads", std::to_string(threads), "--label", label, "--out", out};
}

// ---------------------------------------------------------------------------

Outcome boltzmann_oracle()
{
	const int n = 8;
	EnergyModel m = default_energy_model(n);
	{
		std::array<std::vector<double>, kNumAminoAcids> p;
		Stream g(17, {});
		for (auto &t : p)
		{
			t.resize(size_t(n * n));
			double s = 0;
			for (auto &x : t)
				s += x = 0.05 + g.uniform();
			for (auto &x : t)
				x /= s;
		}
		m.rama = RamachandranGrid::from_tables(n, p, 1e-9);
	}
	m.beta.beta2 = m.beta.beta4 = 0;
	const std::string seq = "AVSLA";
	auto prob = LoopProblem::open_chain(seq);
	SamplerConfig cfg;
	cfg.particles = 20000;
	cfg.seed = 11;
	auto ws = run_smc(prob, m, cfg);

	// exact target by enumeration of the two free (φ,ψ) cells
	auto aa = parse_sequence(seq);
	const size_t C = size_t(n * n);
	std::vector<double> exact(C * C), est(C * C, 0.0);
	double z = 0;
	for (size_t a = 0; a < C; ++a)
		for (size_t b = 0; b < C; ++b)
		{
			double e = -std::log(m.rama.probability(aa[0], int(a) / n, int(a) % n)) -
			           std::log(m.rama.probability(aa[1], int(b) / n, int(b) % n));
			z += exact[a * C + b] = std::exp(-m.beta.beta1 * e);
		}
	for (auto &x : exact)
		x /= z;
	for (auto &c : ws.conformations)
	{
		size_t cell[2];
		for (size_t k = 0; k < 2; ++k)
			cell[k] = size_t(*m.rama.index_of(*c.dihedrals[k].phi) * n + *m.rama.index_of(*c.dihedrals[k].psi));
		est[cell[0] * C + cell[1]] += c.weight;
	}
	auto tv = [](const std::vector<double> &p, const std::vector<double> &q) {
		double s = 0;
		for (size_t i = 0; i < p.size(); ++i)
			s += std::abs(p[i] - q[i]);
		return 0.5 * s;
	};
	auto marg = [&](const std::vector<double> &j, int which) {
		std::vector<double> r(C, 0.0);
		for (size_t a = 0; a < C; ++a)
			for (size_t b = 0; b < C; ++b)
				r[which == 0 ? a : b] += j[a * C + b];
		return r;
	};
	double t0 = tv(marg(est, 0), marg(exact, 0)), t1 = tv(marg(est, 1), marg(exact, 1)), tj = tv(est, exact);
	double worst = std::max(t0, t1);
	return {worst < 0.05, "TV marginals " + fmt("%.3g", t0) + ", " + fmt("%.3g", t1) + " (joint " + fmt("%.3g", tj) +
	                          ") < 0.05"};
}

Outcome resampling_unbiased()
{
	const size_t M = 200, N = 50, R = 10000;
	std::vector<double> w(M);
	Stream g(3, {});
	for (size_t i = 0; i < M; ++i)
		w[i] = i < 5 ? 0.5 : g.uniform() * 0.01;
	double tot = std::accumulate(w.begin(), w.end(), 0.0);
	for (auto &x : w)
		x /= tot;
	double c = solve_threshold(w, N);
	std::vector<double> sum(M, 0), sum2(M, 0);
	std::vector<size_t> seen(M, 0);
	for (uint64_t rep = 0; rep < R; ++rep)
	{
		Stream rng(rep, {23});
		auto r = resample_optimal(w, N, rng);
		std::vector<double> mass(M, 0);
		for (size_t k = 0; k < r.index.size(); ++k)
			mass[r.index[k]] += r.weight[k];
		for (size_t i = 0; i < M; ++i)
		{
			sum[i] += mass[i];
			sum2[i] += mass[i] * mass[i];
			seen[i] += mass[i] > 0;
		}
	}
	size_t beyond = 0, group1 = 0, group1_ok = 0;
	double worst = 0;
	for (size_t i = 0; i < M; ++i)
	{
		double mean = sum[i] / R;
		if (c * w[i] >= 1)
		{
			++group1;
			group1_ok += seen[i] == R && std::abs(mean - w[i]) <= 1e-12;
			continue;
		}
		double se = std::sqrt(std::max(sum2[i] / R - mean * mean, 0.0) / R);
		double zs = se > 0 ? std::abs(mean - w[i]) / se : (mean == w[i] ? 0 : INFINITY);
		worst = std::max(worst, zs);
		beyond += zs > 3;
	}
	return {beyond == 0 && group1 == group1_ok && group1 > 0,
	        std::to_string(M - group1) + " group-2 ancestors, max |z| " + fmt("%.2f", worst) + " (" +
	            std::to_string(beyond) + " beyond 3 SE); group 1 retained " + std::to_string(group1_ok) + "/" +
	            std::to_string(group1)};
}

Outcome closure_soundness()
{
	IdealGeometry g;
	std::mt19937_64 rng(1000);
	int recovered = 0;
	size_t solutions = 0, junction_ok = 0;
	for (int t = 0; t < 1000; ++t)
	{
		auto fx = random_problem(rng, g);
		auto sols = solve_closure(fx.problem, g);
		recovered += contains(sols, fx.truth, 1e-3);
		for (auto &s : sols)
		{
			++solutions;
			junction_ok += check_junction(fx.problem, s.dihedrals, g).ok(1e-3, 0.1);
		}
	}
	return {recovered == 1000 && junction_ok == solutions,
	        "generator recovered " + std::to_string(recovered) + "/1000; junction ok " + std::to_string(junction_ok) +
	            "/" + std::to_string(solutions)};
}

// The two repetitions are shared by the zero-clash and pipeline checks.
struct Repetitions
{
	std::string rep1, rep2;
	int rc1 = -1, rc2 = -1;
};

const Repetitions &repetitions()
{
	static Repetitions r = [] {
		Repetitions x;
		x.rep1 = (scratch() / "rep1.jsonl").string();
		x.rep2 = (scratch() / "rep2.jsonl").string();
		x.rc1 = cli_run(sample_cmd(x.rep1, 1000, 1, 0, "rep1"));
		x.rc2 = cli_run(sample_cmd(x.rep2, 1000, 2, 0, "rep2"));
		return x;
	}();
	return r;
}

Outcome zero_clash_telescoping()
{
	auto &r = repetitions();
	if (r.rc1 != 0)
		return {false, "sample exited with " + std::to_string(r.rc1)};
	auto model = EnergyModel::load_dir(LOOPSMC_DATA_DIR);
	auto tpl = parse_template(kPdb, "A", true);
	auto prob = LoopProblem::from_template(tpl, {kStart, kEnd, kSeq});
	auto f = load_samples(r.rep1);
	size_t clash = 0, tele = 0;
	double worst = 0;
	for (auto &c : f.conformations)
	{
		clash += has_clash(c, prob, model.pairwise);
		double sum = std::accumulate(c.increments.begin(), c.increments.end(), 0.0);
		double err = std::max(std::abs(sum - total_energy(c, prob, model)), std::abs(sum - c.energy));
		worst = std::max(worst, err);
		tele += err <= 1e-9;
	}
	const size_t n = f.conformations.size();
	return {n > 0 && clash == 0 && tele == n,
	        "1A8O " + std::to_string(kStart) + "-" + std::to_string(kEnd) + ", N=1000: " + std::to_string(n) +
	            " weight>0, " + std::to_string(clash) + " clashing, telescoping " + std::to_string(tele) + "/" +
	            std::to_string(n) + " (max err " + fmt("%.2g", worst) + ")"};
}

Outcome pipeline_shape()
{
	auto &r = repetitions();
	if (r.rc1 != 0 || r.rc2 != 0)
		return {false, "sample exited with " + std::to_string(r.rc1) + "/" + std::to_string(r.rc2)};
	auto prefix = (scratch() / "table2").string();
	if (int rc = cli_run({"cluster", "--samples", r.rep1, r.rep2, "--labels", "rep1", "rep2", "--k", "10",
	                      "--out-prefix", prefix});
	    rc != 0)
		return {false, "cluster exited with " + std::to_string(rc)};

	std::vector<std::string> why;
	// CSV layout
	std::ifstream csv(prefix + ".csv");
	std::string line;
	std::getline(csv, line);
	if (line != "cluster,n_rep1,n_rep2,weight_rep1,weight_rep2")
		why.push_back("bad CSV header");
	std::vector<std::array<double, 4>> rows;
	while (std::getline(csv, line))
	{
		std::array<double, 5> v{};
		if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3], &v[4]) != 5 ||
		    int(v[0]) != int(rows.size()) + 1)
			why.push_back("bad CSV row");
		rows.push_back({v[1], v[2], v[3], v[4]});
	}
	if (rows.size() != 10)
		why.push_back(std::to_string(rows.size()) + " CSV rows");

	// partition identities against an in-process recomputation
	ClusterOptions opt;
	opt.k = 10;
	auto lib = cluster_runs({load_samples(r.rep1).conformations, load_samples(r.rep2).conformations}, opt);
	const auto &rep = lib.report;
	std::vector<size_t> nsum(2, 0);
	std::vector<double> wsum(2, 0.0), csvw(2, 0.0);
	for (size_t c = 0; c < rep.clusters.size() && c < rows.size(); ++c)
		for (size_t v = 0; v < 2; ++v)
		{
			nsum[v] += rep.clusters[c].n[v];
			wsum[v] += rep.clusters[c].weight[v];
			csvw[v] += rows[c][2 + v];
			if (double(rep.clusters[c].n[v]) != rows[c][v] || std::abs(rep.clusters[c].weight[v] - rows[c][2 + v]) > 5e-7)
				why.push_back("CSV disagrees with recomputation");
		}
	for (size_t v = 0; v < 2; ++v)
	{
		if (nsum[v] != rep.subsample[v].retained)
			why.push_back("counts do not partition the retained samples");
		if (std::abs(wsum[v] - 1) > 1e-9 || std::abs(csvw[v] - 1) > 10 * 5e-7)
			why.push_back("weights do not sum to one");
	}
	if (rep.assignment.size() != lib.samples.size())
		why.push_back("assignment incomplete");
	for (size_t c = 0; c < rep.clusters.size(); ++c)
		if (rep.assignment[rep.clusters[c].medoid] != int(c))
			why.push_back("medoid outside its cluster");
	auto j = nlohmann::json::parse(read_file(prefix + ".json"));
	if (j["k"] != 10 || j["clusters"].size() != 10 || !j["subsampling"].contains("limit"))
		why.push_back("bad JSON report");

	// soft alarm: repetition imbalance
	double imbalance = 0;
	size_t alarmed = 0;
	for (auto &row : rep.clusters)
	{
		double n = double(row.n[0] + row.n[1]);
		double share = std::max(row.n[0], row.n[1]) / n;
		imbalance = std::max(imbalance, share);
		alarmed += share > 0.85;
	}
	std::string detail = why.empty() ? "report well-formed, partition identities exact" : why.front();
	detail += "; imbalance soft alarm: worst cluster " + fmt("%.0f", 100 * imbalance) + "% one repetition";
	detail += alarmed ? " (" + std::to_string(alarmed) + "/10 clusters > 85%: ALARM, not gating)" : " (ok)";
	return {why.empty(), detail};
}

Outcome metrics_monotone()
{
	auto toy = toy_closed();
	EnergyModel m = default_energy_model(24);
	auto ref = template_backbone(toy.tpl, toy.seg.start, toy.seg.end);
	int ok = 0;
	std::string worst;
	double margin = INFINITY;
	for (uint64_t seed = 1; seed <= 10; ++seed)
	{
		SamplerConfig small, large;
		small.particles = 200;
		large.particles = 2000;
		small.seed = large.seed = seed;
		double a = compare_to_template(run_smc(toy.prob, m, small).conformations, ref).min_rmsd;
		double b = compare_to_template(run_smc(toy.prob, m, large).conformations, ref).min_rmsd;
		ok += b <= a;
		margin = std::min(margin, a - b);
	}
	return {ok == 10, std::to_string(ok) + "/10 seeds min-RMSD(N=2000) <= min-RMSD(N=200), smallest gap " +
	                      fmt("%.3f", margin) + " A"};
}

Outcome determinism()
{
	std::vector<std::string> files;
	const auto first = (scratch() / "det1.jsonl").string();
	for (int t : {1, 2, 8})
	{
		auto out = (scratch() / ("det" + std::to_string(t) + ".jsonl")).string();
		if (cli_run(sample_cmd(out, 100, 7, t)) != 0)
			return {false, "sample failed at " + std::to_string(t) + " threads"};
		// same input path each time: the report echoes its inputs
		auto prefix = (scratch() / ("detc" + std::to_string(t))).string();
		if (cli_run({"cluster", "--samples", first, "--k", "5", "--threads", std::to_string(t), "--out-prefix",
		             prefix}) != 0)
			return {false, "cluster failed at " + std::to_string(t) + " threads"};
		files.push_back(read_file(out) + read_file(out + ".log.tsv") + read_file(prefix + ".csv") +
		                read_file(prefix + ".json") + read_file(prefix + "_medoids.pdb"));
	}
	bool same = files[0] == files[1] && files[0] == files[2];
	return {same, std::string("samples, run log and cluster outputs ") + (same ? "byte-identical" : "differ") +
	                  " at 1, 2, 8 threads"};
}

} // namespace

int main(int argc, char **argv)
{
	const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
	    {"boltzmann_oracle", boltzmann_oracle},
	    {"resampling_unbiased", resampling_unbiased},
	    {"closure_soundness", closure_soundness},
	    {"zero_clash_telescoping", zero_clash_telescoping},
	    {"pipeline_shape", pipeline_shape},
	    {"metrics_monotone", metrics_monotone},
	    {"determinism", determinism},
	};
	std::vector<std::string> wanted(argv + 1, argv + argc);
	int failed = 0;
	for (auto &[name, fn] : checks)
	{
		if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end())
			continue;
		auto t0 = std::chrono::steady_clock::now();
		Outcome o;
		try
		{
			o = fn();
		}
		catch (const std::exception &e)
		{
			o = {false, std::string("exception: ") + e.what()};
		}
		double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
		std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
		std::fflush(stdout);
		failed += !o.pass;
	}
	fs::remove_all(scratch());
	return failed ? 1 : 0;
}
