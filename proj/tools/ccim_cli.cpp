// Command-line front end wiring the full pipeline: simulate, audit,
// build-dict, train, eval, ablate. Every run writes a config echo capturing
// the exact argv, and `rerun` re-executes a run from that echo.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccim/ccim.hpp"
#include "ccim/confounder.hpp"
#include "ccim/core.hpp"
#include "ccim/metrics.hpp"
#include "ccim/scm.hpp"
#include "ccim/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ccim;

namespace {

void require_writable(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw Error("exists", "output '" + path + "' exists; pass --force to overwrite");
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << content;
}

void write_echo(const std::string& path, const std::string& subcommand,
                const std::vector<std::string>& argv, const json& resolved,
                bool force) {
  require_writable(path, force);
  json echo;
  echo["subcommand"] = subcommand;
  echo["argv"] = argv;
  echo["resolved"] = resolved;
  write_text(path, echo.dump(1) + "\n");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  double beta = 0.9;
  int n = 20000;
  int val_n = 2000;
  int test_n = 5000;
  uint64_t seed = 1;
  int n_z = 10, n_x = 10, n_s = 8, n_c = 20, n_y = 4;
  double alpha_s = 0.8, alpha_c = 0.6, alpha_y = 0.9;
  std::string out;
  bool force = false;
};

void run_simulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
  scm::SCMConfig cfg;
  cfg.n_z = a.n_z; cfg.n_x = a.n_x; cfg.n_s = a.n_s; cfg.n_c = a.n_c; cfg.n_y = a.n_y;
  cfg.bias_beta = a.beta;
  cfg.alpha_s = a.alpha_s; cfg.alpha_c = a.alpha_c; cfg.alpha_y = a.alpha_y;
  cfg.seed = a.seed;
  auto model = scm::build_scm(cfg);

  fs::create_directories(a.out);
  std::string manifest_path = a.out + "/manifest.json";
  std::string sidecar_path = a.out + "/audit_sidecar.json";
  std::string echo_path = a.out + "/config.json";
  require_writable(manifest_path, a.force);
  require_writable(sidecar_path, a.force);

  // seed split: one stream per stage, derived from the root seed
  auto train_ds = scm::sample_dataset(model, a.n, a.seed * 1000 + 1, scm::Regime::biased);
  auto val_ds = scm::sample_dataset(model, a.val_n, a.seed * 1000 + 2, scm::Regime::biased);
  auto test_ds = scm::sample_dataset(model, a.test_n, a.seed * 1000 + 3,
                                     scm::Regime::deconfounded);

  std::vector<core::Sample> samples;
  json z_audit = json::object();
  auto emit = [&](const scm::SyntheticDataset& ds, core::Split split,
                  const std::string& prefix) {
    int i = 0;
    for (const auto& r : ds.records) {
      core::Sample s;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s-%06d", prefix.c_str(), i++);
      s.sample_id = buf;
      s.split = split;
      s.synthetic = core::SyntheticRecord{r.s, r.c, a.n_s, a.n_c};
      s.labels.value = core::SingleLabel{r.y, a.n_y};
      samples.push_back(std::move(s));
      z_audit[buf] = {{"z", r.z}, {"x", r.x}};
    }
  };
  emit(train_ds, core::Split::train, "train");
  emit(val_ds, core::Split::val, "val");
  emit(test_ds, core::Split::test, "test");
  core::save_manifest(samples, manifest_path);

  json tables;
  for (int x = 0; x < a.n_x; ++x) {
    tables["likelihood"].push_back(scm::exact_likelihood(model, x));
    tables["intervention"].push_back(scm::exact_intervention(model, x));
  }
  json sidecar;
  sidecar["per_sample"] = std::move(z_audit);
  sidecar["exact_tables"] = std::move(tables);
  sidecar["cardinalities"] = {{"n_z", a.n_z}, {"n_x", a.n_x}, {"n_s", a.n_s},
                              {"n_c", a.n_c}, {"n_y", a.n_y}};
  write_text(sidecar_path, sidecar.dump(1) + "\n");

  json resolved = {{"beta", a.beta}, {"n", a.n}, {"val_n", a.val_n},
                   {"test_n", a.test_n}, {"seed", a.seed},
                   {"n_z", a.n_z}, {"n_x", a.n_x}, {"n_s", a.n_s},
                   {"n_c", a.n_c}, {"n_y", a.n_y},
                   {"alpha_s", a.alpha_s}, {"alpha_c", a.alpha_c},
                   {"alpha_y", a.alpha_y}, {"out", a.out}};
  write_echo(echo_path, "simulate", argv, resolved, a.force);
}

// ---------------------------------------------------------------------------
// build-dict

struct BuildDictArgs {
  std::string manifest;
  std::string encoder = "random-proj";
  std::string features;  // external-file input
  int n = 16;
  uint64_t d = 2048;
  uint64_t seed = 7;
  bool no_mask = false;
  std::string algo = "kmeans";
  std::string out;
  bool force = false;
};

core::FeatureSet dict_features(const BuildDictArgs& a) {
  if (a.encoder == "external-file") {
    if (a.features.empty()) throw argument_error("--encoder external-file needs --features");
    return core::read_feature_set(a.features);
  }
  auto samples = core::load_manifest(a.manifest);
  std::vector<confounder::ContextImage> contexts;
  for (const auto& s : samples) {
    if (s.split != core::Split::train) continue;
    if (a.encoder == "onehot") {
      if (!s.synthetic)
        throw config_error("onehot encoder needs synthetic records (sample '" +
                           s.sample_id + "')");
      confounder::ContextImage ctx;
      ctx.grid.rows = 1;
      ctx.grid.cols = s.synthetic->n_c;
      ctx.grid.cells.assign(s.synthetic->n_c, 0.0f);
      ctx.grid.cells[s.synthetic->c] = 1.0f;
      ctx.provenance = s.sample_id;
      contexts.push_back(std::move(ctx));
    } else {
      if (!s.image)
        throw config_error("random-proj encoder needs grid images (sample '" +
                           s.sample_id + "')");
      if (a.no_mask) {
        contexts.push_back({*s.image, s.sample_id});
      } else {
        if (!s.subject_box)
          throw validation_error("sample '" + s.sample_id +
                                 "' has no subject_box; masking requires one");
        contexts.push_back(confounder::mask_subject(*s.image, *s.subject_box,
                                                    s.sample_id));
      }
    }
  }
  if (contexts.empty()) throw argument_error("no training samples usable for the dictionary");
  if (a.encoder == "onehot") {
    confounder::OneHotContextEncoder enc(contexts.front().grid.cells.size());
    return confounder::extract_context_features(contexts, enc);
  }
  confounder::RandomProjectionEncoder enc(a.d, a.seed);
  return confounder::extract_context_features(contexts, enc);
}

void run_build_dict(const BuildDictArgs& a, const std::vector<std::string>& argv) {
  require_writable(a.out, a.force);
  auto features = dict_features(a);
  auto algo = a.algo == "kmedoids" ? confounder::ClusterAlgo::kmedoids
                                   : confounder::ClusterAlgo::kmeans_pp;
  std::string enc_name = a.encoder == "external-file"
                             ? "external:" + a.features
                             : a.encoder;
  auto dict = confounder::build_dictionary(features, a.n, a.seed, enc_name, algo);
  confounder::write_dictionary(dict, a.out);
  json resolved = {{"manifest", a.manifest}, {"encoder", a.encoder},
                   {"features", a.features}, {"n", a.n}, {"d", a.d},
                   {"seed", a.seed}, {"no_mask", a.no_mask}, {"algo", a.algo},
                   {"out", a.out}};
  write_echo(a.out + ".config.json", "build-dict", argv, resolved, a.force);
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string manifest;
  std::string dict;
  std::string out;
  std::string trace;
  bool ccim = true;
  std::string variant = "dot";
  bool no_lambda = false;
  bool no_prior = false;
  bool random_dict = false;
  uint64_t seed = 1;
  int epochs = 30;
  double lr = 0.05;
  int batch = 128;
  int hidden = 32;
  int d_m = 32;
  int d_n = 32;
  double init_gain = 16.0;
  std::string loss = "softmax-ce";
  bool force = false;
};

trainer::TrainConfig to_train_config(const TrainArgs& a) {
  trainer::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  cfg.loss = trainer::loss_mode_from_string(a.loss);
  cfg.ccim_enabled = a.ccim;
  cfg.variant = intervention::variant_from_string(a.variant);
  cfg.use_lambda = !a.no_lambda;
  cfg.use_prior = !a.no_prior;
  cfg.hidden = a.hidden;
  cfg.d_m = a.d_m;
  cfg.d_n = a.d_n;
  cfg.init_gain = a.init_gain;
  return cfg;
}

struct TrainOutcome {
  trainer::BaselineModel model;
  trainer::LossTrace trace;
};

TrainOutcome train_from_files(const TrainArgs& a) {
  auto samples = core::load_manifest(a.manifest);
  auto data = trainer::instances_from_samples(samples, core::Split::train);
  if (data.empty()) throw argument_error("manifest has no training samples");
  int n_s = static_cast<int>(data.front().s_in.size());
  int n_c = static_cast<int>(data.front().c_in.size());
  int n_y = 0;
  if (const auto* sl = std::get_if<core::SingleLabel>(&data.front().labels.value))
    n_y = sl->num_classes;
  else if (const auto* ml = std::get_if<core::MultiLabel>(&data.front().labels.value))
    n_y = static_cast<int>(ml->bits.size());
  else
    n_y = 3;

  auto cfg = to_train_config(a);
  confounder::ConfounderDictionary dict;
  const confounder::ConfounderDictionary* dict_ptr = nullptr;
  if (cfg.ccim_enabled) {
    if (a.dict.empty()) throw argument_error("--ccim needs --dict");
    dict = confounder::read_dictionary(a.dict);
    if (a.random_dict)
      dict = confounder::random_dictionary(dict.n, dict.dim, cfg.seed ^ 0xD1C7ULL);
    dict_ptr = &dict;
  }
  TrainOutcome out;
  out.model = trainer::build_model(n_s, n_c, n_y, cfg, dict_ptr);
  out.trace = trainer::train(out.model, data, cfg);
  return out;
}

void run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  require_writable(a.out, a.force);
  std::string trace_path = a.trace.empty() ? a.out + ".trace.csv" : a.trace;
  require_writable(trace_path, a.force);

  auto outcome = train_from_files(a);
  trainer::save_model(outcome.model, a.out);
  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (size_t e = 0; e < outcome.trace.per_epoch.size(); ++e)
    csv << e << "," << fmt(outcome.trace.per_epoch[e]) << "\n";
  write_text(trace_path, csv.str());

  json resolved = {{"manifest", a.manifest}, {"dict", a.dict}, {"out", a.out},
                   {"trace", trace_path}, {"ccim", a.ccim}, {"variant", a.variant},
                   {"no_lambda", a.no_lambda}, {"no_prior", a.no_prior},
                   {"random_dict", a.random_dict}, {"seed", a.seed},
                   {"epochs", a.epochs}, {"lr", a.lr}, {"batch", a.batch},
                   {"hidden", a.hidden}, {"d_m", a.d_m}, {"d_n", a.d_n},
                   {"init_gain", a.init_gain}, {"loss", a.loss}};
  write_echo(a.out + ".config.json", "train", argv, resolved, a.force);
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string model;
  std::string manifest;
  std::string split = "test";
  std::string regime;
  std::string out;
  bool force = false;
};

json report_to_json(const trainer::EvalResult& res, bool single_label) {
  json j;
  if (single_label) j["accuracy"] = res.accuracy;
  j["map"] = res.report.map;
  j["c_f1"] = res.report.c_f1;
  j["o_f1"] = res.report.o_f1;
  j["mean_jc"] = res.report.mean_jc;
  j["aae"] = res.report.aae;
  j["regime"] = res.report.notes;
  json ap = json::object();
  for (const auto& [cls, v] : res.report.per_class_ap) ap[std::to_string(cls)] = v;
  j["per_class_ap"] = std::move(ap);
  json thr = json::object();
  for (const auto& [cls, v] : res.report.thresholds) thr[std::to_string(cls)] = v;
  j["thresholds"] = std::move(thr);
  return j;
}

void run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  require_writable(a.out, a.force);
  std::string csv_path = a.out + ".per_class_ap.csv";
  require_writable(csv_path, a.force);
  auto model = trainer::load_model(a.model);
  auto samples = core::load_manifest(a.manifest);
  auto data = trainer::instances_from_samples(samples, core::split_from_string(a.split));
  std::string tag = a.regime.empty() ? a.split : a.regime;
  auto res = trainer::evaluate(model, data, tag);
  write_text(a.out, report_to_json(res, model.loss_mode == trainer::LossMode::softmax_ce)
                        .dump(1) + "\n");
  std::ostringstream csv;
  csv << "class,ap\n";
  for (const auto& [cls, v] : res.report.per_class_ap) csv << cls << "," << fmt(v) << "\n";
  write_text(csv_path, csv.str());
  json resolved = {{"model", a.model}, {"manifest", a.manifest}, {"split", a.split},
                   {"regime", tag}, {"out", a.out}};
  write_echo(a.out + ".config.json", "eval", argv, resolved, a.force);
}

// ---------------------------------------------------------------------------
// audit

struct AuditArgs {
  std::string manifest;
  int target_class = 0;
  size_t top_k = 200;
  std::string out;
  bool force = false;
};

void run_audit(const AuditArgs& a, const std::vector<std::string>& argv) {
  require_writable(a.out, a.force);
  std::string hist_path = a.out + ".histogram.csv";
  require_writable(hist_path, a.force);
  auto samples = core::load_manifest(a.manifest);
  std::vector<int> contexts;
  std::vector<bool> flags;
  for (const auto& s : samples) {
    if (!s.synthetic)
      throw config_error("audit needs synthetic context ids (sample '" + s.sample_id + "')");
    contexts.push_back(s.synthetic->c);
    if (const auto* sl = std::get_if<core::SingleLabel>(&s.labels.value))
      flags.push_back(sl->index == a.target_class);
    else if (const auto* ml = std::get_if<core::MultiLabel>(&s.labels.value))
      flags.push_back(a.target_class < static_cast<int>(ml->bits.size()) &&
                      ml->bits[a.target_class]);
    else
      throw config_error("audit needs categorical labels (sample '" + s.sample_id + "')");
  }
  auto report = metrics::conditional_entropy_audit(contexts, flags, a.top_k);

  json j;
  j["zero_entropy_fraction"] = report.zero_entropy_fraction;
  j["histogram"] = report.histogram;
  json per = json::object();
  for (const auto& [ctx, h] : report.per_context_entropy) per[std::to_string(ctx)] = h;
  j["per_context_entropy"] = std::move(per);
  write_text(a.out, j.dump(1) + "\n");

  std::ostringstream csv;
  csv << "bin_low,bin_high,count\n";
  for (int b = 0; b < 5; ++b)
    csv << fmt(0.2 * b) << "," << fmt(0.2 * (b + 1)) << "," << report.histogram[b] << "\n";
  write_text(hist_path, csv.str());
  json resolved = {{"manifest", a.manifest}, {"target_class", a.target_class},
                   {"top_k", a.top_k}, {"out", a.out}};
  write_echo(a.out + ".config.json", "audit", argv, resolved, a.force);
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
  std::string data;  // simulate output directory
  std::string grid = "variants";
  uint64_t seed = 1;
  int epochs = 30;
  std::string out;
  bool force = false;
};

struct AblateCell {
  std::string name;
  TrainArgs train;
  int dict_n = 16;
};

void run_ablate(const AblateArgs& a, const std::vector<std::string>& argv) {
  fs::create_directories(a.out);
  std::string results_path = a.out + "/results.csv";
  require_writable(results_path, a.force);
  std::string manifest = a.data + "/manifest.json";

  TrainArgs base;
  base.manifest = manifest;
  base.seed = a.seed;
  base.epochs = a.epochs;
  base.force = true;

  std::vector<AblateCell> cells;
  if (a.grid == "variants") {
    auto cell = [&](const std::string& name, auto&& mutate) {
      AblateCell c{name, base, 16};
      mutate(c.train);
      cells.push_back(std::move(c));
    };
    cell("vanilla", [](TrainArgs& t) { t.ccim = false; });
    cell("ccim-dot", [](TrainArgs&) {});
    cell("ccim-additive", [](TrainArgs& t) { t.variant = "additive"; });
    cell("ccim-dot-no-lambda", [](TrainArgs& t) { t.no_lambda = true; });
    cell("ccim-dot-no-prior", [](TrainArgs& t) { t.no_prior = true; });
    cell("ccim-dot-no-lambda-no-prior",
         [](TrainArgs& t) { t.no_lambda = true; t.no_prior = true; });
    cell("ccim-random-dict", [](TrainArgs& t) { t.random_dict = true; });
    cell("ccim-kmedoids", [](TrainArgs&) {});
  } else if (a.grid == "nsweep") {
    for (int n : {4, 8, 16, 32, 64}) {
      AblateCell c{"ccim-n" + std::to_string(n), base, n};
      cells.push_back(std::move(c));
    }
  } else {
    throw argument_error("unknown ablation grid '" + a.grid + "'");
  }

  // Dictionaries per distinct (n, algo) pair, built once up front.
  for (auto& c : cells) {
    if (!c.train.ccim) continue;
    std::string algo = c.name == "ccim-kmedoids" ? "kmedoids" : "kmeans";
    std::string dict_path = a.out + "/dict-n" + std::to_string(c.dict_n) + "-" + algo + ".bin";
    if (!fs::exists(dict_path)) {
      BuildDictArgs d;
      d.manifest = manifest;
      d.encoder = "onehot";
      d.n = c.dict_n;
      d.seed = a.seed;
      d.algo = algo;
      d.out = dict_path;
      d.force = true;
      auto features = dict_features(d);
      auto dict = confounder::build_dictionary(
          features, d.n, d.seed, d.encoder,
          algo == "kmedoids" ? confounder::ClusterAlgo::kmedoids
                             : confounder::ClusterAlgo::kmeans_pp);
      confounder::write_dictionary(dict, dict_path);
    }
    c.train.dict = dict_path;
  }

  size_t max_threads = 1;
  if (const char* env = std::getenv("CCIM_THREADS"))
    max_threads = std::max<size_t>(1, std::stoul(env));

  std::vector<std::string> rows(cells.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const auto& c = cells[i];
      auto outcome = train_from_files(c.train);
      auto samples = core::load_manifest(c.train.manifest);
      auto test = trainer::instances_from_samples(samples, core::Split::test);
      auto res = trainer::evaluate(outcome.model, test, "deconfounded");
      std::ostringstream row;
      row << c.name << "," << fmt(res.accuracy) << "," << fmt(res.report.map) << ","
          << fmt(res.report.c_f1) << "," << fmt(res.report.o_f1);
      rows[i] = row.str();
    }
  };
  std::vector<std::thread> pool;
  for (size_t t = 0; t < std::min(max_threads, cells.size()); ++t)
    pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ostringstream csv;
  csv << "cell,accuracy,map,c_f1,o_f1\n";
  for (const auto& r : rows) csv << r << "\n";
  write_text(results_path, csv.str());
  json resolved = {{"data", a.data}, {"grid", a.grid}, {"seed", a.seed},
                   {"epochs", a.epochs}, {"out", a.out}};
  write_echo(a.out + "/config.json", "ablate", argv, resolved, a.force);
}

// ---------------------------------------------------------------------------

int dispatch(std::vector<std::string> args);

void run_rerun(const std::string& echo_path) {
  std::ifstream in(echo_path);
  if (!in) throw io_error("cannot open config echo '" + echo_path + "'");
  json echo = json::parse(in);
  auto argv = echo.at("argv").get<std::vector<std::string>>();
  int rc = dispatch(argv);
  if (rc != 0) throw Error("rerun", "re-executed run failed");
}

int dispatch(std::vector<std::string> args) {
  CLI::App app{"context-deconfounded training toolkit"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a bias-controllable synthetic dataset");
  sim_cmd->add_option("--beta", sim.beta, "confounding strength in [0,1]");
  sim_cmd->add_option("--n", sim.n, "training sample count");
  sim_cmd->add_option("--val-n", sim.val_n, "validation sample count (biased)");
  sim_cmd->add_option("--test-n", sim.test_n, "test sample count (deconfounded)");
  sim_cmd->add_option("--seed", sim.seed, "root seed");
  sim_cmd->add_option("--nz", sim.n_z); sim_cmd->add_option("--nx", sim.n_x);
  sim_cmd->add_option("--ns", sim.n_s); sim_cmd->add_option("--nc", sim.n_c);
  sim_cmd->add_option("--ny", sim.n_y);
  sim_cmd->add_option("--alpha-s", sim.alpha_s);
  sim_cmd->add_option("--alpha-c", sim.alpha_c);
  sim_cmd->add_option("--alpha-y", sim.alpha_y);
  sim_cmd->add_option("--out", sim.out, "output directory")->required();
  sim_cmd->add_flag("--force", sim.force, "overwrite existing outputs");

  BuildDictArgs bd;
  auto* bd_cmd = app.add_subcommand("build-dict", "build the confounder dictionary");
  bd_cmd->add_option("--manifest", bd.manifest);
  bd_cmd->add_option("--encoder", bd.encoder)
      ->check(CLI::IsMember({"random-proj", "external-file", "onehot"}));
  bd_cmd->add_option("--features", bd.features, "feature file for external-file");
  bd_cmd->add_option("--n", bd.n, "cluster count");
  bd_cmd->add_option("--d", bd.d, "encoder output dim (random-proj)");
  bd_cmd->add_option("--seed", bd.seed);
  bd_cmd->add_flag("--no-mask", bd.no_mask, "skip subject masking");
  bd_cmd->add_option("--algo", bd.algo)->check(CLI::IsMember({"kmeans", "kmedoids"}));
  bd_cmd->add_option("--out", bd.out)->required();
  bd_cmd->add_flag("--force", bd.force);

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "train the two-branch model");
  tr_cmd->add_option("--manifest", tr.manifest)->required();
  tr_cmd->add_option("--dict", tr.dict);
  tr_cmd->add_option("--out", tr.out)->required();
  tr_cmd->add_option("--trace", tr.trace, "loss trace CSV path");
  tr_cmd->add_flag("--ccim,!--no-ccim", tr.ccim, "enable the intervention head");
  tr_cmd->add_option("--variant", tr.variant)->check(CLI::IsMember({"dot", "additive"}));
  tr_cmd->add_flag("--no-lambda", tr.no_lambda);
  tr_cmd->add_flag("--no-prior", tr.no_prior);
  tr_cmd->add_flag("--random-dict", tr.random_dict);
  tr_cmd->add_option("--seed", tr.seed);
  tr_cmd->add_option("--epochs", tr.epochs);
  tr_cmd->add_option("--lr", tr.lr);
  tr_cmd->add_option("--batch", tr.batch);
  tr_cmd->add_option("--hidden", tr.hidden);
  tr_cmd->add_option("--dm", tr.d_m);
  tr_cmd->add_option("--dn", tr.d_n);
  tr_cmd->add_option("--init-gain", tr.init_gain,
                     "init bound multiplier for the intervention-path weights");
  tr_cmd->add_option("--loss", tr.loss)
      ->check(CLI::IsMember({"softmax-ce", "binary-ce", "squared-error"}));
  tr_cmd->add_flag("--force", tr.force);

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "evaluate a trained model");
  ev_cmd->add_option("--model", ev.model)->required();
  ev_cmd->add_option("--manifest", ev.manifest)->required();
  ev_cmd->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test"}));
  ev_cmd->add_option("--regime", ev.regime, "regime tag for the report");
  ev_cmd->add_option("--out", ev.out)->required();
  ev_cmd->add_flag("--force", ev.force);

  AuditArgs au;
  auto* au_cmd = app.add_subcommand("audit", "conditional-entropy bias audit");
  au_cmd->add_option("--manifest", au.manifest)->required();
  au_cmd->add_option("--target-class", au.target_class)->required();
  au_cmd->add_option("--top-k", au.top_k, "restrict to the k most frequent contexts");
  au_cmd->add_option("--out", au.out)->required();
  au_cmd->add_flag("--force", au.force);

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "run an ablation grid");
  ab_cmd->add_option("--data", ab.data, "simulate output directory")->required();
  ab_cmd->add_option("--grid", ab.grid)->check(CLI::IsMember({"variants", "nsweep"}));
  ab_cmd->add_option("--seed", ab.seed);
  ab_cmd->add_option("--epochs", ab.epochs);
  ab_cmd->add_option("--out", ab.out)->required();
  ab_cmd->add_flag("--force", ab.force);

  std::string rerun_path;
  auto* rr_cmd = app.add_subcommand("rerun", "re-execute a run from its config echo");
  rr_cmd->add_option("echo", rerun_path, "config echo file")->required();

  std::vector<std::string> argv_echo = args;
  // CLI11 consumes arguments in reverse
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (sim_cmd->parsed()) run_simulate(sim, argv_echo);
  else if (bd_cmd->parsed()) run_build_dict(bd, argv_echo);
  else if (tr_cmd->parsed()) run_train(tr, argv_echo);
  else if (ev_cmd->parsed()) run_eval(ev, argv_echo);
  else if (au_cmd->parsed()) run_audit(au, argv_echo);
  else if (ab_cmd->parsed()) run_ablate(ab, argv_echo);
  else if (rr_cmd->parsed()) run_rerun(rerun_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return dispatch(std::move(args));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << "\n";
    return 1;
  }
}
