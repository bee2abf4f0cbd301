// flowcast: command-line front end.
//
//   flowcast ingest   --input edges.csv
//   flowcast stats    --input edges.csv
//   flowcast baseline --input edges.csv --method edgebank --target ratio
//   flowcast train    --input edges.csv
//   flowcast predict  --input edges.csv --model out/dlf.json --volume-model out/gbdt.json
//   flowcast evaluate --input edges.csv --ratios out/ratios.csv --volumes out/volumes.csv
//   flowcast synth
//
// Global flags: --config FILE, --seed N, --out DIR, --set key=value (repeatable).
// Every command writes manifest.json next to its artifacts.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "flowcast/flowcast.hpp"

namespace fs = std::filesystem;
using flowcast::NodeId;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "flowcast-out";
  std::vector<std::string> overrides;
};

struct Run {
  std::string command;
  flowcast::Config config;
  fs::path out;
  json inputs = json::array();
  json outputs = json::array();
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  fs::path artifact(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw flowcast::Error("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw flowcast::Error("cannot write '" + p.string() + "'");
  out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

Run start(const std::string& command, const Common& common) {
  Run run;
  run.command = command;
  if (!common.config_path.empty()) {
    std::istringstream in(read_file(common.config_path));
    run.config.load(in, common.config_path);
  }
  for (const auto& kv : common.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw flowcast::ConfigError("--set expects key=value, got '" + kv + "'");
    run.config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (common.seed) run.config.set("seed", std::to_string(*common.seed));
  run.out = common.out_dir;
  fs::create_directories(run.out);
  return run;
}

void finish(Run& run) {
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - run.started).count();
  json m;
  m["command"] = run.command;
  m["seed"] = run.config.seed();
  m["inputs"] = run.inputs;
  m["outputs"] = run.outputs;
  m["config"] = run.config.to_json();
  m["wall_time_seconds"] = seconds;
  write_json(run.out / "manifest.json", m);
}

std::string record_input(Run& run, const std::string& path, const std::string& role) {
  std::string bytes = read_file(path);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(flowcast::hash_name(bytes)));
  run.inputs.push_back({{"role", role}, {"path", path}, {"bytes", bytes.size()}, {"fnv1a64", hex}});
  return bytes;
}

flowcast::SnapshotSeries load_series(Run& run, const std::string& path, flowcast::DropSummary* drops = nullptr) {
  std::istringstream in(record_input(run, path, "edges"));
  auto result = flowcast::ingest_edges(in, flowcast::ingest_config(run.config));
  if (drops) *drops = result.drops;
  return flowcast::build_snapshots(std::move(result.edges), std::move(result.universe));
}

/// Appends the seed and config echo after the payload.
void add_stamp(json& j, const Run& run) {
  j["seed"] = run.config.seed();
  j["config"] = run.config.to_json();
}

flowcast::embeddings::StructuralEmbedding structural_features(Run& run, const flowcast::SnapshotSeries& series) {
  const auto& path = run.config.text("embed.path");
  if (path.empty()) return flowcast::embeddings::structural_embed(series, flowcast::embed_config(run.config));
  std::istringstream in(record_input(run, path, "embedding"));
  auto emb = flowcast::embeddings::load_embeddings(in, series.n_nodes());
  emb.warmup_months = run.config.count("embed.warmup_months");
  return emb;
}

json drops_json(const flowcast::DropSummary& d) {
  json rejected = json::array();
  for (const auto& r : d.rejected) rejected.push_back({{"line", r.line}, {"reason", r.reason}});
  return {{"rows_read", d.rows_read},
          {"non_positive_amount", d.non_positive_amount},
          {"self_loops", d.self_loops},
          {"out_of_range", d.out_of_range},
          {"below_activity", d.below_activity},
          {"total_dropped", d.total_dropped()},
          {"rejected", rejected}};
}

json fit_json(std::span<const double> values) {
  try {
    const auto fit = flowcast::netstats::fit_power_law(flowcast::netstats::positive_only(values));
    return {{"alpha", fit.alpha}, {"x_min", fit.x_min}, {"ks_distance", fit.ks_distance}, {"n_tail", fit.n_tail}};
  } catch (const flowcast::Error& e) {
    return {{"error", e.what()}};
  }
}

std::vector<std::size_t> test_snapshots(const Run& run, const flowcast::SnapshotSeries& series) {
  const auto split = flowcast::dlf::chronological_split(series.size(), run.config.real("dlf.test_fraction"),
                                                        run.config.count("dlf.min_test"));
  std::vector<std::size_t> ts;
  for (std::size_t t = split.train_end; t < series.size(); ++t) ts.push_back(t);
  return ts;
}

flowcast::baselines::RatioAveraging averaging(const Run& run) {
  return run.config.text("baseline.averaging") == "pooled_weights"
             ? flowcast::baselines::RatioAveraging::pooled_weights
             : flowcast::baselines::RatioAveraging::average_then_renormalize;
}

void write_volumes(std::ostream& out, std::size_t t, std::span<const double> v, const std::vector<bool>& keep) {
  for (NodeId i = 0; i < v.size(); ++i)
    if (keep[i]) out << t << ',' << i << ',' << flowcast::csv::format_double(v[i]) << '\n';
}

/// Nodes with outflow in any of the three months before t.
std::vector<bool> volume_rows(const flowcast::volume::MonthlyTotals& totals, std::size_t t, std::size_t n) {
  std::vector<bool> keep(n, false);
  for (NodeId i = 0; i < n; ++i)
    for (std::size_t s = t >= 3 ? t - 3 : 0; s < t; ++s) keep[i] = keep[i] || totals.sent[s][i] > 0.0;
  return keep;
}

std::map<std::size_t, std::map<NodeId, double>> read_volume_csv(const std::string& text) {
  std::istringstream in(text);
  std::map<std::size_t, std::map<NodeId, double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (flowcast::csv::trim(line).empty()) continue;
    if (line_no == 1) {
      if (flowcast::csv::trim(line) != "t,node,pred_volume")
        throw flowcast::ParseError(line_no, "expected header 't,node,pred_volume'");
      continue;
    }
    auto f = flowcast::csv::split(line);
    if (!f || f->size() != 3) throw flowcast::ParseError(line_no, "expected 3 fields");
    auto t = flowcast::csv::parse_int<std::size_t>((*f)[0]);
    auto i = flowcast::csv::parse_int<NodeId>((*f)[1]);
    auto v = flowcast::csv::parse_double((*f)[2]);
    if (!t || !i || !v) throw flowcast::ParseError(line_no, "malformed volume row");
    out[*t][*i] = *v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_ingest(Run& run, const std::string& input) {
  flowcast::DropSummary drops;
  const auto series = load_series(run, input, &drops);
  {
    std::ofstream out(run.artifact("nodes.csv"));
    flowcast::write_node_universe(out, series.universe);
  }
  {
    std::ofstream out(run.artifact("snapshots.csv"));
    flowcast::write_snapshots(out, series);
  }
  json j;
  j["n_nodes"] = series.n_nodes();
  j["n_snapshots"] = series.size();
  j["first_month"] = flowcast::month_label(series.first_month);
  j["drops"] = drops_json(drops);
  add_stamp(j, run);
  write_json(run.artifact("ingest.json"), j);
}

void cmd_stats(Run& run, const std::string& input) {
  const auto series = load_series(run, input);
  const auto s = flowcast::netstats::summarize(series);
  const auto d = flowcast::netstats::aggregate_distributions(series);
  json j;
  j["n_snapshots"] = s.n_snapshots;
  j["n_nodes"] = s.n_nodes;
  j["n_edges"] = s.n_edges;
  j["avg_sparsity"] = s.avg_sparsity;
  j["avg_edge_persistence"] = s.avg_edge_persistence;
  j["power_law"] = {{"in_degree", fit_json(d.in_degree)},
                    {"out_degree", fit_json(d.out_degree)},
                    {"in_weight", fit_json(d.in_weight)},
                    {"out_weight", fit_json(d.out_weight)}};
  const std::pair<const char*, const std::vector<double>*> dists[] = {
      {"in_degree", &d.in_degree}, {"out_degree", &d.out_degree}, {"in_weight", &d.in_weight}, {"out_weight", &d.out_weight}};
  for (const auto& [name, values] : dists) {
    std::ofstream out(run.artifact(std::string("ccdf_") + name + ".csv"));
    out << "x,ccdf\n";
    for (const auto& p : flowcast::netstats::ccdf(flowcast::netstats::positive_only(*values)))
      out << flowcast::csv::format_double(p.x) << ',' << flowcast::csv::format_double(p.p) << '\n';
  }
  add_stamp(j, run);
  write_json(run.artifact("stats.json"), j);
  std::cout << j.dump(2) << '\n';
}

void cmd_baseline(Run& run, const std::string& input, const std::string& method, const std::string& target) {
  using namespace flowcast::baselines;
  const auto series = load_series(run, input);
  const Window window = method == "edgebank" ? Window::all_history : Window::last_month;
  const auto ts = test_snapshots(run, series);
  json counts = json::array();
  if (target == "ratio") {
    std::ofstream out(run.artifact("ratios.csv"));
    out << "t,src,dst,amount\n";
    for (std::size_t t : ts) {
      const auto p = edgebank_ratio(series, t, window, averaging(run));
      flowcast::write_snapshot_rows(out, t, p.ratios);
      counts.push_back({{"t", t}, {"cold_start", p.n_cold_start()}});
    }
  } else {
    std::ofstream out(run.artifact("volumes.csv"));
    out << "t,node,pred_volume\n";
    const flowcast::volume::MonthlyTotals totals(series);
    for (std::size_t t : ts) {
      const auto p = edgebank_volume(series, t, window);
      std::vector<bool> keep = volume_rows(totals, t, series.n_nodes());
      for (NodeId i = 0; i < keep.size(); ++i) keep[i] = keep[i] && !p.cold_start[i];
      write_volumes(out, t, p.volume, keep);
      counts.push_back({{"t", t}, {"cold_start", p.n_cold_start()}});
    }
  }
  json j;
  j["method"] = method;
  j["target"] = target;
  j["snapshots"] = counts;
  add_stamp(j, run);
  write_json(run.artifact("baseline.json"), j);
}

void cmd_train(Run& run, const std::string& input, const std::string& which) {
  const auto series = load_series(run, input);
  const auto tcfg = flowcast::train_config(run.config);
  const auto split = flowcast::dlf::chronological_split(series.size(), tcfg.test_fraction, tcfg.min_test_snapshots);
  json summary;
  summary["split"] = {{"train_end", split.train_end}, {"n_snapshots", split.n_snapshots}};
  if (which == "dlf" || which == "both") {
    const auto emb = structural_features(run, series);
    const flowcast::dlf::TemporalIndex index(series, flowcast::feature_scheme(run.config));
    auto result = flowcast::dlf::train(series, index, emb.features, tcfg);
    flowcast::checkpoint::DlfCheckpoint ck;
    ck.params = std::move(result.params);
    ck.embedding = emb;
    ck.config = run.config.to_json();
    ck.training = {{"initial_loss", result.initial_loss},
                   {"loss_trace", result.loss_trace},
                   {"n_examples", result.n_examples},
                   {"train_end", split.train_end}};
    write_json(run.artifact("dlf.json"), flowcast::checkpoint::to_json(ck));
    summary["dlf"] = ck.training;
  }
  if (which == "gbdt" || which == "both") {
    const std::size_t begin = run.config.count("embed.warmup_months") + flowcast::volume::kVolumeWindow;
    const auto ds = flowcast::volume::build_volume_dataset(series, begin, split.train_end);
    if (ds.y.empty()) throw flowcast::Error("no volume training rows before the test split");
    flowcast::checkpoint::GbdtCheckpoint ck;
    ck.model = flowcast::volume::gbdt_fit(ds.x, ds.y, flowcast::gbdt_config(run.config));
    ck.config = run.config.to_json();
    const auto mse = flowcast::volume::staged_mse(ck.model, ds.x, ds.y);
    write_json(run.artifact("gbdt.json"), flowcast::checkpoint::to_json(ck));
    summary["gbdt"] = {{"n_rows", ds.y.size()}, {"initial_mse", mse.front()}, {"final_mse", mse.back()}};
  }
  add_stamp(summary, run);
  write_json(run.artifact("train.json"), summary);
}

void cmd_predict(Run& run, const std::string& input, const std::string& model_path, const std::string& volume_path) {
  if (model_path.empty() && volume_path.empty()) throw flowcast::ConfigError("predict needs --model and/or --volume-model");
  json summary;
  std::optional<flowcast::checkpoint::DlfCheckpoint> dlf;
  std::optional<flowcast::checkpoint::GbdtCheckpoint> gbdt;
  // The checkpoint's config echo replaces the run config so prediction sees
  // exactly the settings the model was trained with.
  if (!model_path.empty()) {
    dlf = flowcast::checkpoint::dlf_from_json(json::parse(record_input(run, model_path, "dlf_model")));
    run.config = flowcast::Config::from_json(dlf->config);
  }
  if (!volume_path.empty()) {
    gbdt = flowcast::checkpoint::gbdt_from_json(json::parse(record_input(run, volume_path, "gbdt_model")));
    if (!dlf) run.config = flowcast::Config::from_json(gbdt->config);
  }
  const auto series = load_series(run, input);
  const auto ts = test_snapshots(run, series);
  std::map<std::size_t, flowcast::SparseMatrix> final_ratios;
  json per_t = json::array();
  if (dlf) {
    if (dlf->embedding.n_nodes() != series.n_nodes())
      throw flowcast::DimensionError("checkpoint embedding covers " + std::to_string(dlf->embedding.n_nodes()) +
                                     " nodes but the input has " + std::to_string(series.n_nodes()));
    if (dlf->params.tree.n_destinations() != series.n_nodes())
      throw flowcast::DimensionError("checkpoint tree does not match the input node count");
    const auto tcfg = flowcast::train_config(run.config);
    const flowcast::dlf::TemporalIndex index(series, flowcast::feature_scheme(run.config));
    std::ofstream raw_out(run.artifact("raw_ratios.csv"));
    std::ofstream out(run.artifact("ratios.csv"));
    raw_out << "t,src,dst,amount\n";
    out << "t,src,dst,amount\n";
    for (std::size_t t : ts) {
      const auto raw = flowcast::dlf::predict_ratios(dlf->params, dlf->embedding.features, index, t,
                                                     tcfg.max_neighbors, tcfg.grad_chunks);
      const auto hist = flowcast::baselines::edgebank_ratio(series, t, flowcast::baselines::Window::all_history,
                                                            averaging(run));
      auto mixed = flowcast::dlf::mix_with_history(raw, hist, tcfg.mix);
      flowcast::write_snapshot_rows(raw_out, t, raw.ratios);
      flowcast::write_snapshot_rows(out, t, mixed.prediction.ratios);
      per_t.push_back({{"t", t},
                       {"model_cold_start", raw.n_cold_start()},
                       {"model_only", mixed.n_model_only},
                       {"history_only", mixed.n_history_only},
                       {"excluded", mixed.n_excluded}});
      final_ratios.emplace(t, std::move(mixed.prediction.ratios));
    }
  }
  if (gbdt) {
    const flowcast::volume::MonthlyTotals totals(series);
    std::ofstream out(run.artifact("volumes.csv"));
    out << "t,node,pred_volume\n";
    std::ofstream flows;
    if (dlf) {
      flows.open(run.artifact("flows.csv"));
      flows << "t,src,dst,amount\n";
    }
    for (std::size_t t : ts) {
      const auto v = flowcast::volume::predict_volumes(gbdt->model, series, t);
      write_volumes(out, t, v, volume_rows(totals, t, series.n_nodes()));
      if (dlf) {
        const auto flow = flowcast::recompose(v, final_ratios.at(t), t);
        flowcast::write_snapshot_rows(flows, t, flow.adjacency);
      }
    }
  }
  summary = json::object();
  summary["snapshots"] = per_t;
  add_stamp(summary, run);
  write_json(run.artifact("predict.json"), summary);
}

void cmd_evaluate(Run& run, const std::string& input, const std::string& ratios_path, const std::string& volumes_path,
                  bool skip_auc) {
  if (ratios_path.empty() && volumes_path.empty())
    throw flowcast::ConfigError("evaluate needs --ratios and/or --volumes");
  const auto series = load_series(run, input);
  flowcast::evalkit::EvalReport report;
  report.threshold = run.config.real("eval.threshold");
  json per_t = json::array();
  if (!ratios_path.empty()) {
    std::istringstream in(record_input(run, ratios_path, "ratios"));
    const auto preds = flowcast::read_snapshot_csv(in, series.n_nodes());
    if (preds.empty()) throw flowcast::Error("no predicted ratio rows in '" + ratios_path + "'");
    double total = 0.0;
    flowcast::evalkit::LinkTask formation, dissolution;
    for (const auto& [t, pred] : preds) {
      if (t >= series.size()) throw flowcast::Error("prediction for snapshot " + std::to_string(t) + " has no truth");
      const auto truth = flowcast::decompose(series[t]).ratios;
      const auto bce = flowcast::evalkit::metric_bce(truth, pred, run.config.flag("eval.full_support"));
      total += bce.value * static_cast<double>(bce.n_rows);
      report.evaluated_rows += bce.n_rows;
      report.cold_start_rows += bce.n_cold_start;
      json row = {{"t", t}, {"bce", bce.value}, {"rows", bce.n_rows}, {"cold_start", bce.n_cold_start}};
      if (!skip_auc) {
        try {
          flowcast::evalkit::append(formation, flowcast::evalkit::eval_formation(series, pred, t, report.threshold));
        } catch (const flowcast::Error& e) {
          row["formation_error"] = e.what();
        }
        try {
          flowcast::evalkit::append(dissolution,
                                    flowcast::evalkit::eval_dissolution(series, pred, t, report.threshold));
        } catch (const flowcast::Error& e) {
          row["dissolution_error"] = e.what();
        }
      }
      per_t.push_back(row);
    }
    report.bce = total / static_cast<double>(report.evaluated_rows);
    if (!skip_auc) {
      auto count = [](const flowcast::evalkit::LinkTask& task, int label) {
        return static_cast<std::size_t>(std::count(task.labels.begin(), task.labels.end(), label));
      };
      report.auc_formation = flowcast::evalkit::task_auc(formation);
      report.auc_dissolution = flowcast::evalkit::task_auc(dissolution);
      report.formation_positives = count(formation, 1);
      report.formation_negatives = count(formation, 0);
      report.dissolution_positives = count(dissolution, 1);
      report.dissolution_negatives = count(dissolution, 0);
      report.rows_emptied_by_threshold = formation.n_rows_emptied;
      std::ofstream f(run.artifact("formation.csv"));
      flowcast::evalkit::write_task_csv(f, formation);
      std::ofstream d(run.artifact("dissolution.csv"));
      flowcast::evalkit::write_task_csv(d, dissolution);
    }
  }
  if (!volumes_path.empty()) {
    const auto preds = read_volume_csv(record_input(run, volumes_path, "volumes"));
    const flowcast::volume::MonthlyTotals totals(series);
    std::vector<double> y, y_hat, ly, ly_hat;
    for (const auto& [t, rows] : preds) {
      if (t >= series.size()) throw flowcast::Error("volume prediction for snapshot " + std::to_string(t) + " has no truth");
      for (const auto& [i, v] : rows) {
        if (i >= series.n_nodes()) throw flowcast::Error("volume prediction for unknown node " + std::to_string(i));
        y.push_back(totals.sent[t][i]);
        y_hat.push_back(v);
        ly.push_back(std::log1p(y.back()));
        ly_hat.push_back(std::log1p(std::max(v, 0.0)));
      }
    }
    report.volume_rows = y.size();
    report.mae = flowcast::evalkit::metric_mae(y, y_hat);
    const auto mape = flowcast::evalkit::metric_mape(y, y_hat);
    report.mape = mape.value;
    report.mape_zero_excluded = mape.n_zero_excluded;
    report.mae_log = flowcast::evalkit::metric_mae(ly, ly_hat);
    report.mape_log = flowcast::evalkit::metric_mape(ly, ly_hat).value;
  }
  json j = flowcast::evalkit::to_json(report);
  j["per_snapshot"] = per_t;
  add_stamp(j, run);
  write_json(run.artifact("metrics.json"), j);
  std::cout << j.dump(2) << '\n';
}

void cmd_synth(Run& run) {
  const auto result = flowcast::synth::generate(flowcast::synth_config(run.config));
  {
    std::ofstream out(run.artifact("edges.csv"));
    flowcast::synth::write_edges_csv(out, result);
  }
  json j = flowcast::synth::to_json(result.truth, result.labels);
  add_stamp(j, run);
  write_json(run.artifact("truth.json"), j);
}

int fail(const char* kind, const std::string& message, int code) {
  json e = {{"error", {{"type", kind}, {"message", message}}}};
  std::cerr << e.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowcast: flow prediction for temporal transfer networks"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  std::uint64_t seed = 0;
  app.add_option("--config", common.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "root seed (overrides the config)");
  app.add_option("--out", common.out_dir, "output directory");
  app.add_option("--set", common.overrides, "override one config key (key=value)");

  std::string input, method = "edgebank", target = "ratio", which = "both", model, volume_model, ratios, volumes;
  bool skip_auc = false;
  std::function<void(Run&)> action;
  std::string command;

  auto add_input = [&](CLI::App* sub) { sub->add_option("--input", input, "edge CSV")->required(); };
  auto* ingest = app.add_subcommand("ingest", "Parse an edge CSV and export snapshots");
  add_input(ingest);
  ingest->callback([&] { command = "ingest"; action = [&](Run& r) { cmd_ingest(r, input); }; });
  auto* stats = app.add_subcommand("stats", "Network statistics, CCDFs and power-law fits");
  add_input(stats);
  stats->callback([&] { command = "stats"; action = [&](Run& r) { cmd_stats(r, input); }; });
  auto* baseline = app.add_subcommand("baseline", "EdgeBank predictions for the test snapshots");
  add_input(baseline);
  baseline->add_option("--method", method)->check(CLI::IsMember({"edgebank", "edgebank-tw"}));
  baseline->add_option("--target", target)->check(CLI::IsMember({"ratio", "volume"}));
  baseline->callback([&] { command = "baseline"; action = [&](Run& r) { cmd_baseline(r, input, method, target); }; });
  auto* train = app.add_subcommand("train", "Fit the ratio and/or volume model");
  add_input(train);
  train->add_option("--model", which, "which model to fit")->check(CLI::IsMember({"dlf", "gbdt", "both"}));
  train->callback([&] { command = "train"; action = [&](Run& r) { cmd_train(r, input, which); }; });
  auto* predict = app.add_subcommand("predict", "Predict ratios, volumes and flows for the test snapshots");
  add_input(predict);
  predict->add_option("--model", model, "ratio model checkpoint")->check(CLI::ExistingFile);
  predict->add_option("--volume-model", volume_model, "volume model checkpoint")->check(CLI::ExistingFile);
  predict->callback([&] { command = "predict"; action = [&](Run& r) { cmd_predict(r, input, model, volume_model); }; });
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against the observed snapshots");
  add_input(evaluate);
  evaluate->add_option("--ratios", ratios, "predicted ratios (t,src,dst,amount)")->check(CLI::ExistingFile);
  evaluate->add_option("--volumes", volumes, "predicted volumes (t,node,pred_volume)")->check(CLI::ExistingFile);
  evaluate->add_flag("--skip-auc", skip_auc, "omit formation/dissolution AUC");
  evaluate->callback([&] { command = "evaluate"; action = [&](Run& r) { cmd_evaluate(r, input, ratios, volumes, skip_auc); }; });
  auto* synth = app.add_subcommand("synth", "Generate a synthetic network with planted structure");
  synth->callback([&] { command = "synth"; action = [&](Run& r) { cmd_synth(r); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed_opt->count() > 0) common.seed = seed;
  try {
    Run run = start(command, common);
    action(run);
    finish(run);
  } catch (const flowcast::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const flowcast::ParseError& e) {
    return fail("parse", e.what(), 1);
  } catch (const flowcast::Error& e) {
    return fail("flowcast", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
