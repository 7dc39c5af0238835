// Copyright 2026 The hihash Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hihash/codec.hpp"
#include "hihash/dataio.hpp"
#include "hihash/diagnostics.hpp"
#include "hihash/encoder.hpp"
#include "hihash/error.hpp"
#include "hihash/metrics.hpp"
#include "hihash/run_config.hpp"
#include "hihash/trainer.hpp"

namespace hihash {

/// Where a command writes its human-readable or JSON summary.
struct CommandIo {
  std::ostream* out = &std::cout;
  bool json = false;
};

namespace cli {

namespace fs = std::filesystem;

inline fs::path out_dir(const RunConfig& cfg) { return cfg.str("out", "out"); }

inline fs::path out_file(const RunConfig& cfg, const std::string& key, const std::string& name) {
  return cfg.has(key) ? fs::path(cfg.str(key)) : out_dir(cfg) / name;
}

inline fs::path input_file(const RunConfig& cfg, const std::string& key, const fs::path& fallback) {
  const fs::path p = cfg.has(key) ? fs::path(cfg.str(key)) : fallback;
  require(fs::is_regular_file(p), ErrorCode::BadConfig, key + ": file " + p.string() + " does not exist");
  return p;
}

inline FeatureFormat feature_format(const RunConfig& cfg) {
  const std::string f = cfg.str("data.format", "bin");
  if (f == "bin" || f == "binary") return FeatureFormat::Binary;
  if (f == "csv") return FeatureFormat::Csv;
  fail(ErrorCode::BadConfig, "data.format must be 'bin' or 'csv', got '" + f + "'");
}

inline std::string feature_ext(FeatureFormat f) { return f == FeatureFormat::Binary ? ".bin" : ".csv"; }

/// Default dataset paths produced by gen-data for a split ("database" or "query").
inline fs::path split_features(const RunConfig& cfg, const std::string& split) {
  const fs::path bin = out_dir(cfg) / (split + "_features.bin");
  const fs::path csv = out_dir(cfg) / (split + "_features.csv");
  if (fs::exists(csv) && !fs::exists(bin)) return csv;
  return bin;
}

inline fs::path split_labels(const RunConfig& cfg, const std::string& split) {
  return out_dir(cfg) / (split + "_labels.csv");
}

inline void emit(const CommandIo& io, const nlohmann::json& summary, const std::string& text) {
  if (io.json)
    *io.out << summary.dump() << '\n';
  else
    *io.out << text;
}

}  // namespace cli

inline SynthSpec synth_spec(const RunConfig& cfg) {
  SynthSpec s;
  s.class_counts = cfg.sizes("synth.class_counts", s.class_counts);
  s.dim = cfg.size("synth.dim", s.dim);
  s.samples_per_leaf = cfg.size("synth.samples_per_leaf", s.samples_per_leaf);
  s.spreads = cfg.reals("synth.spreads", s.spreads);
  s.noise = cfg.real("synth.noise", s.noise);
  s.seed = derive_seed(cfg.u64("seed", 0), kSynthStream);
  s.sigma2 = cfg.reals("loss.sigma2");
  return s;
}

/// sigma2 comes from loss.sigma2 when set, otherwise from the taxonomy.
inline LossConfig loss_config(const RunConfig& cfg, const LabelTaxonomy& tax) {
  LossConfig c;
  c.alpha = cfg.real("loss.alpha", c.alpha);
  c.eta1 = cfg.real("loss.eta1", c.eta1);
  c.sigma2 = cfg.reals("loss.sigma2", tax.sigma2);
  require(!c.sigma2.empty(), ErrorCode::BadConfig, "no sigma2: set loss.sigma2 or store it in the taxonomy");
  const std::string d = cfg.str("loss.distance", "squared");
  if (d == "squared")
    c.distance = DistanceForm::Squared;
  else if (d == "euclidean")
    c.distance = DistanceForm::Euclidean;
  else
    fail(ErrorCode::BadConfig, "loss.distance must be 'squared' or 'euclidean', got '" + d + "'");
  return c;
}

inline TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig c;
  c.lr_start = cfg.real("train.lr_start", c.lr_start);
  c.lr_end = cfg.real("train.lr_end", c.lr_end);
  c.momentum = cfg.real("train.momentum", c.momentum);
  c.batch_size = cfg.size("train.batch_size", c.batch_size);
  c.inner_iters = cfg.size("train.inner_iters", c.inner_iters);
  c.max_outer = cfg.size("train.max_outer", c.max_outer);
  c.convergence_tol = cfg.real("train.convergence_tol", c.convergence_tol);
  c.stage2_eta1_multiplier = cfg.real("train.stage2_eta1_multiplier", c.stage2_eta1_multiplier);
  c.stage2_fraction = cfg.real("train.stage2_fraction", c.stage2_fraction);
  c.seed = derive_seed(cfg.u64("seed", 0), kShuffleStream);
  const std::string decay = cfg.str("train.decay", "geometric");
  if (decay == "geometric")
    c.decay = LrDecay::Geometric;
  else if (decay == "step")
    c.decay = LrDecay::Step;
  else
    fail(ErrorCode::BadConfig, "train.decay must be 'geometric' or 'step', got '" + decay + "'");
  c.decay_steps = cfg.size("train.decay_steps", c.decay_steps);
  c.halt_after = cfg.size("train.halt_after", c.halt_after);
  validate_train_config(c);
  return c;
}

inline MetricConfig metric_config(const RunConfig& cfg) {
  MetricConfig c;
  c.mahp_k = cfg.size("eval.mahp_k", c.mahp_k);
  c.ndcg_k = cfg.size("eval.ndcg_k", c.ndcg_k);
  const std::string g = cfg.str("eval.gain", "exponential");
  if (g == "exponential")
    c.gain = GainForm::Exponential;
  else if (g == "linear")
    c.gain = GainForm::Linear;
  else
    fail(ErrorCode::BadConfig, "eval.gain must be 'exponential' or 'linear', got '" + g + "'");
  return c;
}

/// Layer widths: input, model.hidden..., model.bits.
inline std::vector<std::size_t> encoder_dims(const RunConfig& cfg, std::size_t input_dim) {
  std::vector<std::size_t> dims{input_dim};
  for (std::size_t h : cfg.sizes("model.hidden", {64})) dims.push_back(h);
  dims.push_back(cfg.size("model.bits", 32));
  return dims;
}

inline Activation encoder_activation(const RunConfig& cfg) {
  const std::string a = cfg.str("model.activation", "tanh");
  if (a == "tanh") return Activation::Tanh;
  if (a == "relu") return Activation::Relu;
  if (a == "identity") return Activation::Identity;
  fail(ErrorCode::BadConfig, "model.activation must be tanh, relu or identity, got '" + a + "'");
}

inline InitScheme encoder_init(const RunConfig& cfg) {
  const std::string s = cfg.str("model.init", "xavier");
  if (s == "xavier") return InitScheme::Xavier;
  if (s == "zero") return InitScheme::Zero;
  fail(ErrorCode::BadConfig, "model.init must be 'xavier' or 'zero', got '" + s + "'");
}

/// Encodes every row of a dataset into a code database.
inline CodeDatabase encode_dataset(const EncoderState& encoder, const Dataset& ds) {
  require(encoder.input_dim() == static_cast<std::size_t>(ds.features.cols()), ErrorCode::DimensionMismatch,
          "encoder expects " + std::to_string(encoder.input_dim()) + " features, dataset has " +
              std::to_string(ds.features.cols()));
  validate_dataset(ds);
  const RowMatrix emb = forward_batch(encoder, ds.features);
  CodeDatabase db(encoder.output_dim());
  for (Eigen::Index i = 0; i < emb.rows(); ++i)
    db.add(binarize(emb.row(i).transpose()), ds.paths[static_cast<std::size_t>(i)],
           ds.ids[static_cast<std::size_t>(i)]);
  return db;
}

/// Writes taxonomy.json and {database,query}_{features,labels} into the
/// output directory. With data.query_fraction = 0 everything goes to the
/// database split.
inline nlohmann::json cmd_gen_data(const RunConfig& cfg, const CommandIo& io = {}) {
  namespace fs = std::filesystem;
  const SynthSpec spec = synth_spec(cfg);
  const Dataset ds = generate_synthetic(spec);
  const double qf = cfg.real("data.query_fraction", 0.2);
  require(qf >= 0.0 && qf < 1.0, ErrorCode::BadConfig, "data.query_fraction must lie in [0, 1)");
  const FeatureFormat fmt = cli::feature_format(cfg);
  const fs::path dir = cli::out_dir(cfg);
  fs::create_directories(dir);
  save_taxonomy(*ds.taxonomy, dir / "taxonomy.json");

  std::size_t n_db = ds.size();
  std::size_t n_q = 0;
  if (qf > 0.0) {
    auto [db, q] = split(ds, qf, derive_seed(cfg.u64("seed", 0), kSplitStream));
    save_dataset(db, dir / ("database_features" + cli::feature_ext(fmt)), dir / "database_labels.csv", fmt);
    save_dataset(q, dir / ("query_features" + cli::feature_ext(fmt)), dir / "query_labels.csv", fmt);
    n_db = db.size();
    n_q = q.size();
  } else {
    save_dataset(ds, dir / ("database_features" + cli::feature_ext(fmt)), dir / "database_labels.csv", fmt);
  }

  nlohmann::json summary = {{"n", ds.size()},
                            {"dim", ds.features.cols()},
                            {"levels", ds.taxonomy->levels()},
                            {"class_counts", ds.taxonomy->class_counts},
                            {"database", n_db},
                            {"queries", n_q},
                            {"out", dir.string()}};
  std::ostringstream text;
  text << "n=" << ds.size() << " D=" << ds.features.cols() << " K=" << ds.taxonomy->levels() << " classes=";
  for (std::size_t k = 0; k < ds.taxonomy->levels(); ++k)
    text << (k ? "," : "") << ds.taxonomy->class_counts[k];
  text << " database=" << n_db << " queries=" << n_q << " -> " << dir.string() << '\n';
  cli::emit(io, summary, text.str());
  return summary;
}

/// Trains on the database split (or data.features / data.labels). Writes
/// encoder.hihe, centers.snapshot, train_log.jsonl, train_state.hits and
/// train_summary.json. train.resume continues from train_state.hits.
inline nlohmann::json cmd_train(const RunConfig& cfg, const CommandIo& io = {}) {
  namespace fs = std::filesystem;
  const fs::path dir = cli::out_dir(cfg);
  const fs::path tax_path = cli::input_file(cfg, "data.taxonomy", dir / "taxonomy.json");
  const fs::path feat_path = cli::input_file(cfg, "data.features", cli::split_features(cfg, "database"));
  const fs::path label_path = cli::input_file(cfg, "data.labels", cli::split_labels(cfg, "database"));

  Dataset ds = load_dataset(feat_path, label_path, tax_path);
  LabelTaxonomy tax = *ds.taxonomy;
  LossConfig loss = loss_config(cfg, tax);
  const TrainConfig tcfg = train_config(cfg);

  const std::size_t levels = cfg.size("train.levels", tax.levels());
  require(levels >= 1 && levels <= tax.levels(), ErrorCode::BadConfig,
          "train.levels must lie in [1, " + std::to_string(tax.levels()) + "]");
  require(loss.sigma2.size() >= levels, ErrorCode::BadConfig, "sigma2 has fewer entries than training levels");
  loss.sigma2.resize(levels);
  if (levels < tax.levels()) {
    tax = truncate_levels(tax, levels);
    ds = truncate_levels(ds, levels);
  }
  validate_loss_config(loss);

  const fs::path state_path = dir / "train_state.hits";
  const fs::path log_path = dir / "train_log.jsonl";
  fs::create_directories(dir);

  const bool resume = cfg.flag("train.resume", false) && fs::exists(state_path);
  TrainState st;
  if (resume) {
    st = load_train_state(state_path);
  } else {
    const EncoderState init =
        init_encoder(encoder_dims(cfg, static_cast<std::size_t>(ds.features.cols())),
                     derive_seed(cfg.u64("seed", 0), kInitStream), encoder_init(cfg), encoder_activation(cfg));
    st = initial_state(ds, tax, init, loss, tcfg);
  }

  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  require(static_cast<bool>(log), ErrorCode::IoError, "cannot open " + log_path.string());
  TrainHooks hooks;
  hooks.on_record = [&log](const TrainRecord& r) { log << to_json(r).dump() << '\n'; };
  hooks.on_checkpoint = [&state_path](const TrainState& s) { save_train_state(s, state_path); };

  TrainResult result;
  if (tcfg.max_outer == 0) {
    st.finished = true;
    result.encoder = st.encoder;
    result.centers = st.centers;
    save_train_state(st, state_path);
  } else {
    result = continue_training(ds, tax, loss, tcfg, st, hooks);
  }
  log.flush();

  save_encoder(result.encoder, dir / "encoder.hihe");
  save_centers(result.centers, dir / "centers.snapshot");

  auto stage_json = [](const StageSummary& s) {
    return nlohmann::json{{"mean_loss", s.mean_loss}, {"penalty", s.penalty}, {"box_gap", s.box_gap}};
  };
  nlohmann::json summary = {{"levels", levels},
                            {"outer_iterations", st.next_outer},
                            {"records_this_run", result.log.size()},
                            {"finished", st.finished},
                            {"resumed", resume},
                            {"final_loss", result.log.empty() ? nlohmann::json() : nlohmann::json(result.log.back().mean_loss)},
                            {"stage1", stage_json(st.stage1)},
                            {"stage2", stage_json(st.stage2)},
                            {"encoder", (dir / "encoder.hihe").string()},
                            {"out", dir.string()}};
  {
    auto out = io::open_out(dir / "train_summary.json");
    out << summary.dump(2) << '\n';
  }
  std::ostringstream text;
  text << "trained K=" << levels << " for " << st.next_outer << " outer iterations";
  if (!result.log.empty()) text << ", final loss " << result.log.back().mean_loss;
  text << (st.finished ? "" : " (halted before completion)") << " -> " << dir.string() << '\n';
  if (st.finished && tcfg.max_outer > 0)
    text << "stage1 penalty " << st.stage1.penalty << " gap " << st.stage1.box_gap << "; stage2 penalty "
         << st.stage2.penalty << " gap " << st.stage2.box_gap << '\n';
  cli::emit(io, summary, text.str());
  return summary;
}

/// With encode.features unset, encodes the database split and, if present,
/// the query split into database_codes.hidb and query_codes.hidb.
inline nlohmann::json cmd_encode(const RunConfig& cfg, const CommandIo& io = {}) {
  namespace fs = std::filesystem;
  const fs::path dir = cli::out_dir(cfg);
  const EncoderState encoder = load_encoder(cli::input_file(cfg, "encode.checkpoint", dir / "encoder.hihe"));
  const fs::path tax_path = cli::input_file(cfg, "encode.taxonomy", cfg.str("data.taxonomy", (dir / "taxonomy.json").string()));
  auto tax = std::make_shared<const LabelTaxonomy>(load_taxonomy(tax_path));

  struct Job {
    fs::path features, labels, output;
  };
  std::vector<Job> jobs;
  if (cfg.has("encode.features")) {
    jobs.push_back({cli::input_file(cfg, "encode.features", {}),
                    cli::input_file(cfg, "encode.labels", cfg.str("data.labels")),
                    cli::out_file(cfg, "encode.output", "codes.hidb")});
  } else {
    jobs.push_back({cli::input_file(cfg, "data.features", cli::split_features(cfg, "database")),
                    cli::input_file(cfg, "data.labels", cli::split_labels(cfg, "database")),
                    cli::out_file(cfg, "encode.output", "database_codes.hidb")});
    const fs::path qf = cli::split_features(cfg, "query");
    if (!cfg.has("data.features") && fs::exists(qf))
      jobs.push_back({qf, cli::input_file(cfg, "data.labels", cli::split_labels(cfg, "query")),
                      dir / "query_codes.hidb"});
  }

  nlohmann::json summary = nlohmann::json::array();
  std::ostringstream text;
  for (const Job& job : jobs) {
    const Dataset ds = load_dataset(job.features, job.labels, tax);
    const CodeDatabase db = encode_dataset(encoder, ds);
    save_database(db, job.output);
    summary.push_back({{"bits", db.bits()}, {"n", db.size()}, {"output", job.output.string()}});
    text << "L=" << db.bits() << " n=" << db.size() << " -> " << job.output.string() << '\n';
  }
  nlohmann::json wrapped = {{"outputs", summary}};
  cli::emit(io, wrapped, text.str());
  return wrapped;
}

/// Ranks the database for every query and writes metrics.json (or
/// eval.output). eval.queries defaults to query_codes.hidb and falls back to
/// the database itself.
inline nlohmann::json cmd_eval(const RunConfig& cfg, const CommandIo& io = {}) {
  namespace fs = std::filesystem;
  const fs::path dir = cli::out_dir(cfg);
  const fs::path db_path = cli::input_file(cfg, "eval.database", dir / "database_codes.hidb");
  const fs::path default_q = fs::exists(dir / "query_codes.hidb") ? dir / "query_codes.hidb" : db_path;
  const fs::path q_path = cli::input_file(cfg, "eval.queries", default_q);

  const CodeDatabase database = load_database(db_path);
  const CodeDatabase queries = load_database(q_path);
  const RetrievalRun run = build_run(queries, database, cfg.flag("eval.exclude_self", true));
  const MetricReport report = evaluate(run, metric_config(cfg));

  nlohmann::json j = to_json(report);
  j["queries"] = queries.size();
  j["database"] = database.size();
  j["bits"] = database.bits();
  {
    auto out = io::open_out(cli::out_file(cfg, "eval.output", "metrics.json"));
    out << j.dump(2) << '\n';
  }
  if (cfg.has("eval.per_query_csv")) {
    auto out = io::open_out(cfg.str("eval.per_query_csv"));
    write_per_query_csv(out, report);
  }
  std::ostringstream text;
  text << std::setprecision(6) << "mAP=" << report.map << " mAHP@" << report.mahp_k << "=" << report.mahp << " nDCG@"
       << report.ndcg_k << "=" << report.ndcg << " (" << queries.size() << " queries, " << database.size()
       << " items)\n";
  for (const auto& note : report.notes) text << "note: " << note << '\n';
  cli::emit(io, j, text.str());
  return j;
}

/// Lists the k nearest database items for search.id (an item already in the
/// database, itself included) or search.feature (comma-separated raw
/// features, encoded with search.checkpoint).
inline nlohmann::json cmd_search(const RunConfig& cfg, const CommandIo& io = {}) {
  namespace fs = std::filesystem;
  const fs::path dir = cli::out_dir(cfg);
  const CodeDatabase db = load_database(cli::input_file(cfg, "search.database", dir / "database_codes.hidb"));
  require(cfg.has("search.id") != cfg.has("search.feature"), ErrorCode::BadConfig,
          "set exactly one of search.id and search.feature");

  BinaryCode query;
  if (cfg.has("search.id")) {
    const std::uint64_t id = cfg.u64("search.id", 0);
    const auto index = db.find_id(id);
    require(index.has_value(), ErrorCode::UnknownId, "id " + std::to_string(id) + " is not in the database");
    query = db.code(*index);
  } else {
    const EncoderState encoder = load_encoder(cli::input_file(cfg, "search.checkpoint", dir / "encoder.hihe"));
    const std::vector<double> x = cfg.reals("search.feature");
    require(x.size() == encoder.input_dim(), ErrorCode::DimensionMismatch,
            "search.feature has " + std::to_string(x.size()) + " values, encoder expects " +
                std::to_string(encoder.input_dim()));
    query = binarize(forward(encoder, Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()))));
  }

  const auto hits = knn(db, query, cfg.size("search.k", 10));
  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream text;
  for (std::size_t r = 0; r < hits.size(); ++r) {
    const auto& h = hits[r];
    rows.push_back({{"rank", r + 1}, {"id", h.id}, {"distance", h.distance}, {"path", db.path(h.index)}});
    text << r + 1 << '\t' << h.id << '\t' << h.distance << '\t';
    const auto& path = db.path(h.index);
    for (std::size_t k = 0; k < path.size(); ++k) text << (k ? "/" : "") << path[k];
    text << '\n';
  }
  nlohmann::json j = {{"results", rows}};
  cli::emit(io, j, text.str());
  return j;
}

}  // namespace hihash
