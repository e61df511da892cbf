#include "airid/commands.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "airid/checkpoint.hpp"
#include "airid/errors.hpp"
#include "airid/plots.hpp"
#include "airid/retrieval.hpp"

#ifndef AIRID_SOURCE_REVISION
#define AIRID_SOURCE_REVISION "unknown"
#endif

namespace airid {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
  }
}

template <typename T>
void read_key(const json& j, const std::string& section, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
  }
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string file_crc(const fs::path& path) { return crc32_hex(read_file_bytes(path)); }

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config;
  std::uint64_t seed = 0;
  json inputs = json::object();
  json outputs = json::object();
  json checkpoints = json::object();
  std::string started = utc_now();

  void add_checkpoint(const std::string& key, const fs::path& path) {
    outputs[key] = path.string();
    checkpoints[path.filename().string()] = file_crc(path);
  }

  void write(const fs::path& dir) const {
    json j{{"command", command},
           {"argv", argv},
           {"config", config},
           {"seed", seed},
           {"source_revision", source_revision()},
           {"inputs", inputs},
           {"outputs", outputs},
           {"checkpoint_crc32", checkpoints},
           {"started_at", started},
           {"finished_at", utc_now()}};
    write_text(dir / ("manifest." + command + ".json"), j.dump(2) + "\n");
  }
};

struct Options {
  std::optional<fs::path> config;
  fs::path data;
  fs::path out;
  std::optional<fs::path> init;
  std::optional<fs::path> checkpoint;
  std::optional<std::string> variant;
  std::optional<double> lambda_g;
  std::optional<double> lambda_d;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> variants;
  std::string param = "lambda_G";
  std::vector<double> values;
  std::vector<double> values_g;
  std::vector<double> values_d;
  bool protocol = false;
  bool no_rankings = false;
  std::vector<fs::path> runs;
};

RunConfig resolve_config(const Options& o, bool seed_is_synth) {
  RunConfig c = load_run_config(o.config);
  if (o.variant) c.train.variant = parse_variant(*o.variant);
  if (o.lambda_g) c.train.lambda_g = *o.lambda_g;
  if (o.lambda_d) c.train.lambda_d = *o.lambda_d;
  if (o.seed) (seed_is_synth ? c.synth.seed : c.train.seed) = *o.seed;
  c.train.validate();
  return c;
}

Manifest start_manifest(const std::string& command, const std::vector<std::string>& argv, const RunConfig& c,
                        std::uint64_t seed) {
  Manifest m;
  m.command = command;
  m.argv = argv;
  m.config = c.to_json();
  m.seed = seed;
  return m;
}

DatasetSplit load_data(const Options& o, Manifest& m) {
  if (o.data.empty()) throw ConfigError("--data is required");
  m.inputs["data"] = o.data.string();
  return read_dataset(o.data);
}

void ensure_out(const fs::path& out) {
  if (out.empty()) throw ConfigError("--out is required");
  fs::create_directories(out);
}

CheckpointSink epoch_sink(const fs::path& out, const std::string& stage) {
  return [out, stage](const Checkpoint& ckpt, int epoch) {
    write_checkpoint(out / (stage + "_epoch" + std::to_string(epoch) + ".airc"), ckpt);
  };
}

// Pretrained checkpoint from --init, <out>/pretrained.airc, or a fresh
// pretraining run whose log rows are appended to `log`.
Checkpoint obtain_pretrained(const Options& o, const RunConfig& c, const DatasetSplit& split, Manifest& m,
                             std::vector<LogRow>& log, std::ostream& out) {
  if (o.init) {
    m.inputs["init"] = o.init->string();
    if (!fs::exists(*o.init)) throw DataError("no checkpoint at " + o.init->string());
    return read_checkpoint(*o.init);
  }
  const fs::path cached = o.out / "pretrained.airc";
  if (fs::exists(cached)) {
    m.inputs["init"] = cached.string();
    return read_checkpoint(cached);
  }
  out << "pretraining image branch for " << c.train.pretrain_epochs << " epochs\n";
  auto stage = pretrain<float>(split, c.train, c.model, nullptr, epoch_sink(o.out, "pretrain"));
  write_checkpoint(cached, stage.checkpoint);
  m.add_checkpoint("pretrained", cached);
  log.insert(log.end(), stage.log.begin(), stage.log.end());
  return stage.checkpoint;
}

json report_json(const EvaluationReport& r, const Checkpoint& ckpt, const std::string& ckpt_crc,
                 const DatasetSplit& split) {
  json j;
  j["metrics"] = r.metrics_json();
  j["cmc"] = r.cmc.values;
  j["num_queries"] = split.queries.size();
  j["gallery_size"] = split.gallery.size();
  j["dataset_seed"] = split.seed;
  j["checkpoint_crc32"] = ckpt_crc;
  j["model"] = ckpt.metadata.contains("model") ? ckpt.metadata.at("model") : json();
  j["train_config"] = ckpt.metadata.contains("train_config") ? ckpt.metadata.at("train_config") : json();
  j["variant"] = j["train_config"].is_object() ? j["train_config"].value("variant", "unknown") : "unknown";
  return j;
}

std::string report_csv(const EvaluationReport& r) {
  std::ostringstream o;
  o.precision(9);
  o << "rank,cmc\n";
  for (std::size_t k = 0; k < r.cmc.values.size(); ++k) o << k + 1 << ',' << r.cmc.values[k] << '\n';
  return o.str();
}

struct GalleryIndexView {
  std::vector<int> image_indices;
  std::vector<SemanticId> ids;
};

std::string rankings_tsv(const EvaluationReport& r, const GalleryIndexView& g) {
  std::ostringstream o;
  o.precision(9);
  o << "query_id\trank\tgallery_image_index\tdistance\trelevant\n";
  for (const auto& q : r.rankings) {
    for (std::size_t k = 0; k < q.order.size(); ++k) {
      const auto pos = static_cast<std::size_t>(q.order[k]);
      o << q.query_id << '\t' << k + 1 << '\t' << g.image_indices[pos] << '\t' << q.distances[k] << '\t'
        << (g.ids[pos] == q.query_id ? 1 : 0) << '\n';
    }
  }
  return o.str();
}

// Evaluates `ckpt` on the split and writes report.json, report.csv and,
// unless disabled, rankings.tsv and cmc.svg into `dir`.
EvaluationReport write_evaluation(const DatasetSplit& split, const Checkpoint& ckpt, const std::string& ckpt_crc,
                                  const fs::path& dir, bool rankings, Manifest& m) {
  const auto report = evaluate_checkpoint<float>(split, ckpt, evaluation_threads());
  write_text(dir / "report.json", report_json(report, ckpt, ckpt_crc, split).dump(2) + "\n");
  write_text(dir / "report.csv", report_csv(report));
  m.outputs["report"] = (dir / "report.json").string();
  if (rankings) {
    GalleryIndexView g;
    for (const auto& s : split.gallery) {
      g.image_indices.push_back(s.image_index);
      g.ids.push_back(s.semantic_id);
    }
    write_text(dir / "rankings.tsv", rankings_tsv(report, g));
    m.outputs["rankings"] = (dir / "rankings.tsv").string();
  }
  PlotSeries s{"cmc", {}, report.cmc.values};
  for (std::size_t k = 0; k < report.cmc.values.size(); ++k) s.xs.push_back(static_cast<double>(k + 1));
  write_text(dir / "cmc.svg", line_plot_svg({s}, {"CMC", "rank", "matching rate"}));
  return report;
}

void print_metrics(std::ostream& out, const std::string& label, const EvaluationReport& r) {
  out << label << ": rank1 " << r.rank1 << "  rank5 " << r.rank5 << "  rank10 " << r.rank10 << "  mAP " << r.mean_ap
      << '\n';
}

int cmd_synth(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto c = resolve_config(o, true);
  ensure_out(o.out);
  auto m = start_manifest("synth", argv, c, c.synth.seed);
  const auto split = make_split(c.schema, c.synth);
  write_dataset(o.out, split);
  for (const char* name : {"images.bin", "attributes.tsv", "split.json"}) m.outputs[name] = (o.out / name).string();
  m.write(o.out);
  out << "wrote " << split.train.size() << " training and " << split.gallery.size() << " gallery images, "
      << split.queries.size() << " queries to " << o.out.string() << '\n';
  return kExitOk;
}

int cmd_pretrain(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto c = resolve_config(o, false);
  ensure_out(o.out);
  auto m = start_manifest("pretrain", argv, c, c.train.seed);
  const auto split = load_data(o, m);
  std::optional<Checkpoint> resume;
  if (o.init) {
    m.inputs["init"] = o.init->string();
    resume = read_checkpoint(*o.init);
  }
  auto stage = pretrain<float>(split, c.train, c.model, resume ? &*resume : nullptr, epoch_sink(o.out, "pretrain"));
  write_checkpoint(o.out / "pretrained.airc", stage.checkpoint);
  write_training_log(o.out / "training_log.csv", stage.log);
  m.add_checkpoint("checkpoint", o.out / "pretrained.airc");
  m.outputs["training_log"] = (o.out / "training_log.csv").string();
  m.write(o.out);
  if (!stage.log.empty()) {
    out << "pretrain l_I " << stage.log.front().image << " -> " << stage.log.back().image << '\n';
  }
  return kExitOk;
}

int cmd_train(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto c = resolve_config(o, false);
  ensure_out(o.out);
  auto m = start_manifest("train", argv, c, c.train.seed);
  const auto split = load_data(o, m);
  std::vector<LogRow> log;
  const auto start = obtain_pretrained(o, c, split, m, log, out);
  auto stage = train_joint<float>(split, c.train, start, epoch_sink(o.out, "joint"));
  log.insert(log.end(), stage.log.begin(), stage.log.end());
  write_checkpoint(o.out / "model.airc", stage.checkpoint);
  write_training_log(o.out / "training_log.csv", log);
  m.add_checkpoint("checkpoint", o.out / "model.airc");
  m.outputs["training_log"] = (o.out / "training_log.csv").string();
  m.write(o.out);
  out << "trained variant " << variant_name(c.train.variant) << " for " << c.train.joint_epochs << " epochs\n";
  return kExitOk;
}

int cmd_eval(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto c = resolve_config(o, false);
  ensure_out(o.out);
  auto m = start_manifest("eval", argv, c, c.train.seed);
  const auto split = load_data(o, m);
  const fs::path path = o.checkpoint ? *o.checkpoint : o.out / "model.airc";
  if (!fs::exists(path)) throw DataError("no checkpoint at " + path.string() + " (run `airid train` first)");
  m.inputs["checkpoint"] = path.string();
  const auto crc = file_crc(path);
  m.checkpoints[path.filename().string()] = crc;
  const auto report = write_evaluation(split, read_checkpoint(path), crc, o.out, !o.no_rankings, m);
  m.write(o.out);
  print_metrics(out, "eval", report);
  return kExitOk;
}

std::string sweep_label(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

int cmd_sweep(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  const auto c = resolve_config(o, false);
  ensure_out(o.out);
  auto m = start_manifest("sweep", argv, c, c.train.seed);
  const auto split = load_data(o, m);
  std::vector<LogRow> log;
  const auto start = obtain_pretrained(o, c, split, m, log, out);
  std::vector<SweepRow> rows;
  if (o.protocol) {
    if (o.values_g.empty() || o.values_d.empty()) throw ConfigError("--protocol needs --values-g and --values-d");
    rows = lambda_protocol(split, o.values_g, o.values_d, c.train, start, evaluation_threads());
  } else {
    if (o.values.empty()) throw ConfigError("sweep needs --values");
    rows = sweep(split, parse_sweep_param(o.param), o.values, c.train, start, evaluation_threads());
  }
  write_text(o.out / "sweep.csv", sweep_csv(rows));
  m.outputs["sweep"] = (o.out / "sweep.csv").string();

  std::map<std::string, std::vector<const SweepRow*>> by_param;
  for (const auto& r : rows) by_param[r.param].push_back(&r);
  for (const auto& [param, prs] : by_param) {
    PlotSeries r1{"rank1", {}, {}}, map{"mAP", {}, {}};
    for (const auto* r : prs) {
      r1.xs.push_back(r->value), r1.ys.push_back(r->rank1);
      map.xs.push_back(r->value), map.ys.push_back(r->mean_ap);
    }
    PlotOptions po{"trade-off " + param, param, "score"};
    po.log_x = true;
    write_text(o.out / ("sweep_" + param + ".svg"), line_plot_svg({r1, map}, po));
  }
  m.write(o.out);
  for (const auto& r : rows) {
    out << r.param << '=' << sweep_label(r.value) << ": rank1 " << r.rank1 << "  mAP " << r.mean_ap << '\n';
  }
  return kExitOk;
}

std::string table_csv(const std::vector<std::pair<std::string, json>>& rows) {
  std::ostringstream o;
  o.precision(9);
  o << "variant,rank1,rank5,rank10,mAP\n";
  for (const auto& [name, metrics] : rows) {
    o << name << ',' << metrics.at("rank1").get<double>() << ',' << metrics.at("rank5").get<double>() << ','
      << metrics.at("rank10").get<double>() << ',' << metrics.at("mAP").get<double>() << '\n';
  }
  return o.str();
}

int cmd_ablate(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
  auto c = resolve_config(o, false);
  ensure_out(o.out);
  auto m = start_manifest("ablate", argv, c, c.train.seed);
  const auto split = load_data(o, m);
  std::vector<Variant> variants;
  if (o.variants.empty()) {
    variants = all_variants();
  } else {
    for (const auto& v : o.variants) variants.push_back(parse_variant(v));
  }
  std::vector<LogRow> pre_log;
  const auto start = obtain_pretrained(o, c, split, m, pre_log, out);
  if (!pre_log.empty()) write_training_log(o.out / "pretrain_log.csv", pre_log);

  std::vector<std::pair<std::string, json>> table;
  for (Variant v : variants) {
    const auto name = variant_name(v);
    const fs::path dir = o.out / name;
    fs::create_directories(dir);
    TrainConfig tc = c.train;
    tc.variant = v;
    auto stage = train_joint<float>(split, tc, start);
    write_checkpoint(dir / "model.airc", stage.checkpoint);
    write_training_log(dir / "training_log.csv", stage.log);
    m.add_checkpoint(name, dir / "model.airc");
    const auto report =
        write_evaluation(split, stage.checkpoint, file_crc(dir / "model.airc"), dir, !o.no_rankings, m);
    m.outputs[name + "_report"] = (dir / "report.json").string();
    table.emplace_back(name, report.metrics_json());
    print_metrics(out, name, report);
  }
  write_text(o.out / "ablation.csv", table_csv(table));
  m.outputs["table"] = (o.out / "ablation.csv").string();
  m.write(o.out);
  return kExitOk;
}

struct RunRecord {
  std::string variant;
  fs::path dir;
  json report;
};

int cmd_report(const Options& o, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  RunConfig c = load_run_config(o.config);
  ensure_out(o.out);
  auto m = start_manifest("report", argv, c, c.train.seed);
  if (o.runs.empty()) throw ConfigError("report needs at least one run directory");

  std::vector<RunRecord> runs;
  std::vector<fs::path> sweeps;
  auto take = [&](const fs::path& dir) {
    std::ifstream in(dir / "report.json");
    try {
      json j = json::parse(in);
      runs.push_back({j.value("variant", dir.filename().string()), dir, std::move(j)});
    } catch (const json::exception& e) {
      err << "warning: skipping " << (dir / "report.json").string() << ": " << e.what() << '\n';
    }
  };
  for (const auto& dir : o.runs) {
    m.inputs["runs"].push_back(dir.string());
    bool found = false;
    if (fs::exists(dir / "sweep.csv")) sweeps.push_back(dir / "sweep.csv"), found = true;
    if (fs::exists(dir / "report.json")) {
      take(dir);
      found = true;
    } else if (fs::is_directory(dir)) {
      std::vector<fs::path> subs;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory() && fs::exists(e.path() / "report.json")) subs.push_back(e.path());
      }
      std::sort(subs.begin(), subs.end());
      for (const auto& s : subs) take(s);
      found = found || !subs.empty();
    }
    if (!found) err << "warning: no report.json under " << dir.string() << ", skipped\n";
  }
  if (runs.empty() && sweeps.empty()) throw DataError("no completed runs found");

  std::stable_sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) {
    return a.variant != b.variant ? a.variant < b.variant : a.dir < b.dir;
  });
  std::vector<std::pair<std::string, json>> table;
  std::vector<PlotSeries> curves;
  for (const auto& r : runs) {
    table.emplace_back(r.variant, r.report.at("metrics"));
    PlotSeries s{r.variant, {}, r.report.value("cmc", std::vector<double>{})};
    if (s.ys.size() > 20) s.ys.resize(20);
    for (std::size_t k = 0; k < s.ys.size(); ++k) s.xs.push_back(static_cast<double>(k + 1));
    curves.push_back(std::move(s));
  }
  if (!runs.empty()) {
    write_text(o.out / "comparison.csv", table_csv(table));
    write_text(o.out / "cmc.svg", line_plot_svg(curves, {"CMC (top 20)", "rank", "matching rate"}));
    m.outputs["table"] = (o.out / "comparison.csv").string();
    m.outputs["cmc_plot"] = (o.out / "cmc.svg").string();
  }

  // Sweep tables: param,value,rank1,rank5,rank10,mAP.
  std::map<std::string, std::vector<std::pair<double, double>>> rank1_by_param;
  for (const auto& path : sweeps) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::stringstream ls(line);
      std::string param, value, rank1;
      if (!std::getline(ls, param, ',') || !std::getline(ls, value, ',') || !std::getline(ls, rank1, ',')) continue;
      try {
        rank1_by_param[param].emplace_back(std::stod(value), std::stod(rank1));
      } catch (const std::exception&) {
        err << "warning: malformed row in " << path.string() << '\n';
      }
    }
  }
  for (const auto& [param, points] : rank1_by_param) {
    PlotSeries s{"rank1", {}, {}};
    for (const auto& [x, y] : points) s.xs.push_back(x), s.ys.push_back(y);
    PlotOptions po{"trade-off " + param, param, "rank1"};
    po.log_x = true;
    write_text(o.out / ("sweep_" + param + ".svg"), line_plot_svg({s}, po));
    m.outputs["sweep_" + param] = (o.out / ("sweep_" + param + ".svg")).string();
  }
  m.write(o.out);
  out << "compared " << runs.size() << " run(s)\n";
  return kExitOk;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  const auto& r = synth.render;
  json s{{"n_train_ids", synth.n_train_ids},
         {"n_test_ids", synth.n_test_ids},
         {"imgs_per_id_per_view", synth.imgs_per_id_per_view},
         {"views", synth.views},
         {"seed", synth.seed},
         {"height", r.geometry.height},
         {"width", r.geometry.width},
         {"noise_sigma", r.noise_sigma},
         {"illumination_min", r.illumination_min},
         {"illumination_max", r.illumination_max},
         {"view1_bias", r.view1_bias},
         {"max_jitter_rows", r.max_jitter_rows},
         {"schema", schema.to_json()}};
  json mdl{{"embedding_size", model.embedding_size},
           {"generator_hidden", model.generator_hidden},
           {"image_hidden", model.image_hidden},
           {"discriminator_hidden", model.discriminator_hidden},
           {"leaky_slope", model.leaky_slope},
           {"image_head_tanh", model.image_head_tanh}};
  return {{"synth", s}, {"model", mdl}, {"train", train.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  reject_unknown(j, "config", {"synth", "model", "train"});
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown(s, "synth",
                   {"n_train_ids", "n_test_ids", "imgs_per_id_per_view", "views", "seed", "height", "width",
                    "noise_sigma", "illumination_min", "illumination_max", "view1_bias", "max_jitter_rows", "schema"});
    read_key(s, "synth", "n_train_ids", c.synth.n_train_ids);
    read_key(s, "synth", "n_test_ids", c.synth.n_test_ids);
    read_key(s, "synth", "imgs_per_id_per_view", c.synth.imgs_per_id_per_view);
    read_key(s, "synth", "views", c.synth.views);
    read_key(s, "synth", "seed", c.synth.seed);
    read_key(s, "synth", "height", c.synth.render.geometry.height);
    read_key(s, "synth", "width", c.synth.render.geometry.width);
    read_key(s, "synth", "noise_sigma", c.synth.render.noise_sigma);
    read_key(s, "synth", "illumination_min", c.synth.render.illumination_min);
    read_key(s, "synth", "illumination_max", c.synth.render.illumination_max);
    read_key(s, "synth", "view1_bias", c.synth.render.view1_bias);
    read_key(s, "synth", "max_jitter_rows", c.synth.render.max_jitter_rows);
    if (s.contains("schema")) {
      try {
        c.schema = AttributeSchema::from_json(s.at("schema"));
      } catch (const DataError& e) {
        throw ConfigError(std::string("synth.schema: ") + e.what());
      }
      c.schema.validate();
    }
  }
  if (j.contains("model")) {
    const auto& s = j.at("model");
    reject_unknown(s, "model",
                   {"embedding_size", "generator_hidden", "image_hidden", "discriminator_hidden", "leaky_slope",
                    "image_head_tanh"});
    read_key(s, "model", "embedding_size", c.model.embedding_size);
    read_key(s, "model", "generator_hidden", c.model.generator_hidden);
    read_key(s, "model", "image_hidden", c.model.image_hidden);
    read_key(s, "model", "discriminator_hidden", c.model.discriminator_hidden);
    read_key(s, "model", "leaky_slope", c.model.leaky_slope);
    read_key(s, "model", "image_head_tanh", c.model.image_head_tanh);
    if (c.model.embedding_size <= 0) throw ConfigError("model.embedding_size must be positive");
  }
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  return c;
}

RunConfig load_run_config(const std::optional<fs::path>& path) {
  if (!path) return RunConfig{};
  std::ifstream in(*path);
  if (!in) throw ConfigError("cannot read config file " + path->string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path->string() + " is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitData;
  if (dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
  return kExitUsage;
}

std::string source_revision() { return AIRID_SOURCE_REVISION; }

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attribute-to-image retrieval by adversarial concept generation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--out", o.out, "output directory")->required();
  };
  auto data = [&](CLI::App* sub) { sub->add_option("--data", o.data, "dataset directory")->required(); };
  auto training = [&](CLI::App* sub) {
    sub->add_option("--variant", o.variant, "full|no-adv|no-sc|mmd|coral|img2a");
    sub->add_option("--lambda-g", o.lambda_g, "generator adversarial weight");
    sub->add_option("--lambda-d", o.lambda_d, "discriminator adversarial weight");
    sub->add_option("--seed", o.seed, "training seed");
    sub->add_option("--init", o.init, "starting checkpoint");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  common(synth);
  synth->add_option("--seed", o.seed, "dataset seed");

  auto* pre = app.add_subcommand("pretrain", "pretrain the image branch");
  common(pre);
  data(pre);
  training(pre);

  auto* train = app.add_subcommand("train", "joint adversarial training");
  common(train);
  data(train);
  training(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  common(eval);
  data(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint (default <out>/model.airc)");
  eval->add_flag("--no-rankings", o.no_rankings, "skip rankings.tsv");

  auto* sw = app.add_subcommand("sweep", "sweep lambda_G or lambda_D");
  common(sw);
  data(sw);
  training(sw);
  sw->add_option("--param", o.param, "lambda_G or lambda_D");
  sw->add_option("--values", o.values, "comma-separated values")->delimiter(',');
  sw->add_flag("--protocol", o.protocol, "lambda_D=1 while sweeping lambda_G, then the best lambda_G over lambda_D");
  sw->add_option("--values-g", o.values_g, "lambda_G values for --protocol")->delimiter(',');
  sw->add_option("--values-d", o.values_d, "lambda_D values for --protocol")->delimiter(',');

  auto* ab = app.add_subcommand("ablate", "train and evaluate every variant");
  common(ab);
  data(ab);
  training(ab);
  ab->add_option("--variants", o.variants, "subset of variants")->delimiter(',');
  ab->add_flag("--no-rankings", o.no_rankings, "skip rankings.tsv");

  auto* rep = app.add_subcommand("report", "compare finished runs");
  common(rep);
  rep->add_option("runs", o.runs, "run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::vector<std::string> args(argv, argv + argc);
  try {
    if (synth->parsed()) return cmd_synth(o, args, out);
    if (pre->parsed()) return cmd_pretrain(o, args, out);
    if (train->parsed()) return cmd_train(o, args, out);
    if (eval->parsed()) return cmd_eval(o, args, out);
    if (sw->parsed()) return cmd_sweep(o, args, out);
    if (ab->parsed()) return cmd_ablate(o, args, out);
    if (rep->parsed()) return cmd_report(o, args, out, err);
  } catch (const std::exception& e) {
    err << "airid: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("airid");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace airid
