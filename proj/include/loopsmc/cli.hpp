#pragma once

// Command-line front end: sample, cluster, metrics, gen-tables.
// Exit codes: 0 success, 2 usage, 3 extinction, 4 data error, 1 anything else.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "loopsmc/analysis.hpp"
#include "loopsmc/checksum.hpp"
#include "loopsmc/error.hpp"
#include "loopsmc/sample_io.hpp"
#include "loopsmc/sampler.hpp"
#include "loopsmc/tables.hpp"
#include "loopsmc/template_io.hpp"

#ifndef LOOPSMC_DEFAULT_DATA_DIR
#define LOOPSMC_DEFAULT_DATA_DIR "data"
#endif

namespace loopsmc::cli {

enum ExitCode
{
	kOk = 0,
	kFailure = 1,
	kUsage = 2,
	kExtinct = 3,
	kDataError = 4
};

/// --energy-dir, else $LOOPSMC_DATA_DIR, else the built-in data directory.
inline std::string data_dir(const std::string &flag)
{
	if (!flag.empty())
		return flag;
	if (const char *env = std::getenv("LOOPSMC_DATA_DIR"); env && *env)
		return env;
	return LOOPSMC_DEFAULT_DATA_DIR;
}

inline std::ofstream open_out(const std::string &path)
{
	std::ofstream os(path, std::ios::binary);
	if (!os)
		throw DataError("cannot write " + path);
	return os;
}

inline void write_json_file(const std::string &path, const nlohmann::json &j)
{
	auto os = open_out(path);
	os << j.dump(2) << '\n';
}

inline std::string fixed6(double x)
{
	char buf[64];
	std::snprintf(buf, sizeof buf, "%.6f", x);
	return buf;
}

struct SampleArgs
{
	std::string template_path, chain = "A", sequence, energy_dir, out, label = "sample";
	int start = 0, end = 0;
	size_t particles = 50000, ns = 20, Ns = 25;
	uint64_t seed = 1;
	int threads = 0;
	std::string order = "alternating";
	bool sample_bridge_omega = false;
	bool skip_closure_dihedrals = false;
	double beta1 = 1.0, beta2 = 0.1, beta3 = 1.0, beta4 = 0.1;
	std::string pdb_out;
};

inline int cmd_sample(const SampleArgs &a, std::ostream &out)
{
	auto t0 = std::chrono::steady_clock::now();
	SegmentSpec seg{a.start, a.end, a.sequence};
	seg.validate();
	SamplerConfig cfg;
	cfg.particles = a.particles;
	cfg.max_rotamers = a.ns;
	cfg.max_joints = a.Ns;
	cfg.seed = a.seed;
	cfg.threads = a.threads;
	cfg.sample_bridge_omega = a.sample_bridge_omega;
	if (a.order == "alternating")
		cfg.order = GrowthOrder::alternating;
	else if (a.order == "left-to-right")
		cfg.order = GrowthOrder::left_to_right;
	else
		throw InvalidArgument("--order must be alternating or left-to-right");
	cfg.validate();

	const std::string dir = data_dir(a.energy_dir);
	EnergyModel model = EnergyModel::load_dir(dir);
	model.beta = {a.beta1, a.beta2, a.beta3, a.beta4};
	model.beta.validate();
	model.charge_closure_dihedrals = !a.skip_closure_dihedrals;

	Template tpl = parse_template(a.template_path, a.chain, true);
	LoopProblem prob = LoopProblem::from_template(tpl, seg);

	WeightedSample ws = run_smc(prob, model, cfg, a.label);

	const std::string log_path = a.out + ".log.tsv", manifest_path = a.out + ".manifest.json";
	{
		auto os = open_out(a.out);
		write_samples(os, a.label, a.start, a.sequence, ws.conformations);
	}
	{
		auto os = open_out(log_path);
		ws.log.write_tsv(os);
	}
	std::vector<std::string> outputs{a.out, log_path, manifest_path};
	if (!a.pdb_out.empty())
	{
		auto os = open_out(a.pdb_out);
		write_conformations(os, ws.conformations, a.chain.empty() ? 'A' : a.chain[0]);
		outputs.push_back(a.pdb_out);
	}
	double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
	nlohmann::json checks;
	for (auto &[f, h] : model.checksums)
		checks[dir + "/" + f] = h;
	checks[a.template_path] = sha256_file(a.template_path);
	nlohmann::json manifest{
		{"command", "sample"},
		{"schema_version", kSampleSchemaVersion},
		{"config",
		 {{"template", a.template_path},
		  {"chain", a.chain},
		  {"start", a.start},
		  {"end", a.end},
		  {"sequence", a.sequence},
		  {"label", a.label},
		  {"particles", cfg.particles},
		  {"ns", cfg.max_rotamers},
		  {"Ns", cfg.max_joints},
		  {"order", a.order},
		  {"sample_bridge_omega", cfg.sample_bridge_omega},
		  {"charge_closure_dihedrals", model.charge_closure_dihedrals},
		  {"beta", {model.beta.beta1, model.beta.beta2, model.beta.beta3, model.beta.beta4}},
		  {"grid_spacing_deg", model.rama.spacing()},
		  {"energy_dir", dir},
		  {"threads", a.threads}}},
		{"seed", cfg.seed},
		{"checksums", checks},
		{"wall_clock_seconds", secs},
		{"log", log_path},
		{"outputs", outputs},
		{"result",
		 {{"finalized", ws.log.finalized},
		  {"zero_weight", ws.log.zero_weight},
		  {"written", ws.conformations.size()}}}};
	write_json_file(manifest_path, manifest);
	out << "wrote " << ws.conformations.size() << " samples to " << a.out << " (" << ws.log.zero_weight
	    << " zero-weight particles dropped)\n";
	return kOk;
}

struct ClusterArgs
{
	std::vector<std::string> samples;
	std::vector<std::string> labels;
	size_t k = 10, subsample = 20000;
	uint64_t seed = 1;
	std::string out_prefix = "clusters";
	int threads = 0;
};

inline void write_cluster_csv(std::ostream &os, const ClusterReport &r)
{
	os << "cluster";
	for (auto &v : r.variants)
		os << ",n_" << v;
	for (auto &v : r.variants)
		os << ",weight_" << v;
	os << '\n';
	for (size_t c = 0; c < r.clusters.size(); ++c)
	{
		os << c + 1;
		for (size_t n : r.clusters[c].n)
			os << ',' << n;
		for (double w : r.clusters[c].weight)
			os << ',' << fixed6(w);
		os << '\n';
	}
}

inline nlohmann::json cluster_json(const ClusterResult &res)
{
	const auto &r = res.report;
	nlohmann::json clusters = nlohmann::json::array();
	for (size_t c = 0; c < r.clusters.size(); ++c)
	{
		nlohmann::json n, w;
		for (size_t v = 0; v < r.variants.size(); ++v)
		{
			n[r.variants[v]] = r.clusters[c].n[v];
			w[r.variants[v]] = r.clusters[c].weight[v];
		}
		const auto &m = res.samples[r.clusters[c].medoid];
		clusters.push_back({{"cluster", c + 1}, {"n", n}, {"weight", w}, {"medoid", {{"label", m.label}, {"id", m.id}}}});
	}
	nlohmann::json sub = nlohmann::json::array();
	for (auto &s : r.subsample)
		sub.push_back({{"label", s.label}, {"input", s.input}, {"retained", s.retained}});
	return {{"k", r.k},
	        {"variants", r.variants},
	        {"clusters", clusters},
	        {"min_medoid_rmsd", std::isnan(r.min_medoid_rmsd) ? nlohmann::json(nullptr) : nlohmann::json(r.min_medoid_rmsd)},
	        {"linkage", "complete"},
	        {"distance", "backbone RMSD (N, CA, C, O), no superposition"},
	        {"subsampling",
	         {{"method", "optimal resampling per input: heavy samples kept, remainder stratified; weights reassigned"},
	          {"limit", r.subsample_limit},
	          {"inputs", sub}}}};
}

inline int cmd_cluster(const ClusterArgs &a, std::ostream &out)
{
	if (a.samples.empty())
		throw InvalidArgument("--samples needs at least one file");
	if (!a.labels.empty() && a.labels.size() != a.samples.size())
		throw InvalidArgument("--labels needs one label per --samples file");
#ifdef _OPENMP
	if (a.threads > 0)
		omp_set_num_threads(a.threads);
#endif
	std::vector<std::vector<Conformation>> runs;
	std::vector<SampleFile> files;
	for (size_t i = 0; i < a.samples.size(); ++i)
	{
		SampleFile f = load_samples(a.samples[i]);
		if (!files.empty() && (f.start != files.front().start || f.sequence.size() != files.front().sequence.size()))
			throw InvalidArgument("sample files cover different segments: " + a.samples.front() + " and " +
			                      a.samples[i]);
		if (!a.labels.empty())
		{
			f.label = a.labels[i];
			for (auto &c : f.conformations)
				c.label = a.labels[i];
		}
		runs.push_back(f.conformations);
		files.push_back(std::move(f));
	}
	ClusterOptions opt;
	opt.k = a.k;
	opt.subsample = a.subsample;
	opt.seed = a.seed;
	auto res = cluster_runs(runs, opt);
	for (size_t i = 0; i < res.report.subsample.size(); ++i)
		res.report.subsample[i].label = files[i].label;

	const std::string csv = a.out_prefix + ".csv", js = a.out_prefix + ".json", pdb = a.out_prefix + "_medoids.pdb";
	{
		auto os = open_out(csv);
		write_cluster_csv(os, res.report);
	}
	auto j = cluster_json(res);
	j["inputs"] = a.samples;
	j["seed"] = a.seed;
	write_json_file(js, j);
	{
		std::vector<Conformation> med;
		for (auto &c : res.report.clusters)
			med.push_back(res.samples[c.medoid]);
		auto os = open_out(pdb);
		write_conformations(os, med);
	}
	out << "clustered " << res.samples.size() << " samples into " << res.report.k << " clusters; wrote " << csv << ", "
	    << js << ", " << pdb << "\n";
	if (!std::isnan(res.report.min_medoid_rmsd))
		out << "minimum inter-medoid RMSD " << fixed6(res.report.min_medoid_rmsd) << " A\n";
	return kOk;
}

struct MetricsArgs
{
	std::vector<std::string> samples;
	std::string template_path, chain = "A", out;
	int start = 0, end = 0;
};

inline int cmd_metrics(const MetricsArgs &a, std::ostream &out)
{
	if (a.samples.empty())
		throw InvalidArgument("--samples needs at least one file");
	if (a.end < a.start)
		throw InvalidArgument("--end precedes --start");
	Template tpl = parse_template(a.template_path, a.chain, true);
	auto ref = template_backbone(tpl, a.start, a.end);
	std::ostringstream csv;
	csv << "label,start,end,samples,min_rmsd,min_rmsd_id,lowest_energy_rmsd,lowest_energy_id\n";
	for (auto &path : a.samples)
	{
		SampleFile f = load_samples(path);
		if (f.start != a.start || f.start + int(f.sequence.size()) - 1 != a.end)
			throw InvalidArgument(path + " covers " + std::to_string(f.start) + "-" +
			                      std::to_string(f.start + int(f.sequence.size()) - 1) + ", not " +
			                      std::to_string(a.start) + "-" + std::to_string(a.end));
		auto m = compare_to_template(f.conformations, ref);
		csv << f.label << ',' << a.start << ',' << a.end << ',' << m.samples << ',' << fixed6(m.min_rmsd) << ','
		    << m.min_rmsd_id << ',' << fixed6(m.lowest_energy_rmsd) << ',' << m.lowest_energy_id << '\n';
	}
	if (a.out.empty())
		out << csv.str();
	else
	{
		auto os = open_out(a.out);
		os << csv.str();
	}
	return kOk;
}

struct GenTablesArgs
{
	std::string corpus, out_dir;
	int grid = 72;
};

inline int cmd_gen_tables(const GenTablesArgs &a, std::ostream &out)
{
	if (a.grid < 2 || 360 % a.grid != 0)
		throw InvalidArgument("--grid must divide 360");
	RamachandranGrid rama = RamachandranGrid::uniform(a.grid);
	if (!a.corpus.empty())
	{
		auto files = list_corpus(a.corpus);
		if (files.empty())
			throw DataError("no .pdb/.ent files in " + a.corpus);
		RamaCorpusStats st;
		rama = estimate_ramachandran(files, a.grid, 1.0, 2e-5, &st);
		out << "estimated Ramachandran tables from " << st.residues << " residues in " << st.files << " files\n";
	}
	auto written = write_default_tables(a.out_dir, rama);
	EnergyModel::load_dir(a.out_dir); // reload as a format check
	for (auto &p : written)
		out << "wrote " << p << '\n';
	return kOk;
}

/// Parses arguments (argv[0] is the program name) and runs one subcommand.
inline int run_cli(const std::vector<std::string> &argv, std::ostream &out = std::cout, std::ostream &err = std::cerr)
{
	CLI::App app{"Sequential Monte Carlo sampling of protein loop conformations"};
	app.require_subcommand(1);

	SampleArgs sa;
	auto *sample = app.add_subcommand("sample", "draw weighted loop conformations");
	sample->add_option("--template", sa.template_path, "template PDB file")->required()->check(CLI::ExistingFile);
	sample->add_option("--chain", sa.chain, "template chain")->capture_default_str();
	sample->add_option("--start", sa.start, "first segment residue (author numbering)")->required();
	sample->add_option("--end", sa.end, "last segment residue")->required();
	sample->add_option("--sequence", sa.sequence, "segment sequence, one letter per residue")->required();
	sample->add_option("--particles", sa.particles, "population size N")->capture_default_str();
	sample->add_option("--ns", sa.ns, "stored rotamers per residue")->capture_default_str();
	sample->add_option("--Ns", sa.Ns, "stored joint side-chain candidates per particle")->capture_default_str();
	sample->add_option("--seed", sa.seed)->capture_default_str();
	sample->add_option("--energy-dir", sa.energy_dir, "energy table directory (default $LOOPSMC_DATA_DIR)");
	sample->add_option("--out", sa.out, "sample file (JSON lines)")->required();
	sample->add_option("--label", sa.label, "variant name")->capture_default_str();
	sample->add_option("--threads", sa.threads, "worker threads (0: all)")->capture_default_str();
	sample->add_option("--order", sa.order, "alternating | left-to-right")->capture_default_str();
	sample->add_flag("--sample-bridge-omega", sa.sample_bridge_omega, "draw ω of the closure residues");
	sample->add_flag("--skip-closure-dihedrals", sa.skip_closure_dihedrals,
	                 "do not charge Ramachandran terms for closure residues");
	sample->add_option("--beta1", sa.beta1)->capture_default_str();
	sample->add_option("--beta2", sa.beta2)->capture_default_str();
	sample->add_option("--beta3", sa.beta3)->capture_default_str();
	sample->add_option("--beta4", sa.beta4)->capture_default_str();
	sample->add_option("--pdb", sa.pdb_out, "also write every sample as a multi-model PDB");

	ClusterArgs ca;
	auto *cluster = app.add_subcommand("cluster", "cluster one or more sample files together");
	cluster->add_option("--samples", ca.samples, "sample files")->required()->check(CLI::ExistingFile);
	cluster->add_option("--labels", ca.labels, "override the label of each sample file");
	cluster->add_option("--k", ca.k, "number of clusters")->capture_default_str();
	cluster->add_option("--subsample", ca.subsample, "maximum clustered samples (all inputs)")->capture_default_str();
	cluster->add_option("--seed", ca.seed)->capture_default_str();
	cluster->add_option("--out-prefix", ca.out_prefix)->capture_default_str();
	cluster->add_option("--threads", ca.threads)->capture_default_str();

	MetricsArgs ma;
	auto *metrics = app.add_subcommand("metrics", "RMSD of samples to the template segment");
	metrics->add_option("--samples", ma.samples, "sample files")->required()->check(CLI::ExistingFile);
	metrics->add_option("--template", ma.template_path)->required()->check(CLI::ExistingFile);
	metrics->add_option("--chain", ma.chain)->capture_default_str();
	metrics->add_option("--start", ma.start)->required();
	metrics->add_option("--end", ma.end)->required();
	metrics->add_option("--out", ma.out, "CSV path (default stdout)");

	GenTablesArgs ga;
	auto *gen = app.add_subcommand("gen-tables", "write stand-in energy tables");
	gen->add_option("--pdb-corpus", ga.corpus, "directory of PDB files for Ramachandran estimation");
	gen->add_option("--out-dir", ga.out_dir)->required();
	gen->add_option("--grid", ga.grid, "grid cells per angle")->capture_default_str();

	std::vector<std::string> rev(argv.rbegin(), argv.rend() - (argv.empty() ? 0 : 1));
	try
	{
		app.parse(rev);
	}
	catch (const CLI::ParseError &e)
	{
		int rc = app.exit(e, out, err);
		return rc == 0 ? kOk : kUsage;
	}
	try
	{
		if (*sample)
			return cmd_sample(sa, out);
		if (*cluster)
			return cmd_cluster(ca, out);
		if (*metrics)
			return cmd_metrics(ma, out);
		if (*gen)
			return cmd_gen_tables(ga, out);
	}
	catch (const ExtinctionError &e)
	{
		err << "error: " << e.what() << '\n';
		return kExtinct;
	}
	catch (const InvalidArgument &e)
	{
		err << "usage error: " << e.what() << '\n';
		return kUsage;
	}
	catch (const DataError &e)
	{
		err << "data error: " << e.what() << '\n';
		return kDataError;
	}
	catch (const std::exception &e)
	{
		err << "error: " << e.what() << '\n';
		return kFailure;
	}
	return kUsage;
}

} // namespace loopsmc::cli
