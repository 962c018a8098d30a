#include "creole/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include <openssl/evp.h>

#include "creole/checkpoint.hpp"
#include "creole/divergence.hpp"
#include "creole/objective.hpp"
#include "creole/table.hpp"

namespace creole {

namespace fs = std::filesystem;

namespace {

template <typename F>
auto in_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void log_line(const std::string& msg) { std::clog << "[creolelm] " << msg << '\n'; }

std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

TrainConfig effective_train_config(const ExperimentConfig& config, const RunSeeds& seeds) {
  TrainConfig t = config.train;
  t.strategy = config.strategy;
  t.seed = seeds.train;
  return t;
}

TrainResult do_train(const TrainConfig& t, const PreparedData& data, const fs::path& out, bool keep_checkpoints) {
  log_line("training " + model_id(t) + " (" + t.preset.name + ", " + std::to_string(t.steps) + " steps, " +
           std::to_string(data.grouped.group_count) + " groups)");
  CheckpointCallback on_checkpoint;
  if (keep_checkpoints && t.checkpoint_interval > 0) {
    fs::create_directories(out / "checkpoints");
    on_checkpoint = [&](std::int64_t step, const EncoderParams& p) {
      save_checkpoint(out / "checkpoints" / ("step-" + std::to_string(step) + ".ckpt"), p);
    };
  }
  TrainResult result = train(data.grouped, data.vocab, t, &data.dev, on_checkpoint);
  auto log = open_out(out / "train_log.tsv");
  write_train_log(log, result.log);
  if (keep_checkpoints) {
    save_checkpoint(out / "best.ckpt", result.best_params);
    save_checkpoint(out / "final.ckpt", result.final_params);
  }
  log_line("best dev loss " + format_fixed(result.best_dev_loss, 4) + " at step " + std::to_string(result.best_step));
  return result;
}

EvalReport do_eval(const ExperimentConfig& config, const RunSeeds& seeds, const PreparedData& data,
                   const EncoderParams& params, const std::string& id) {
  const EncoderLM lm(params);
  return evaluate_intrinsic(lm, data.vocab, data.eval_corpus, data.dictionary ? &*data.dictionary : nullptr,
                            config.ks, seeds.eval, id, to_string(config.mode) + "/" + data.eval_name);
}

void write_reports(const fs::path& out, const std::vector<EvalReport>& reports) {
  auto tsv = open_out(out / "report.tsv");
  write_report_tsv(tsv, reports);
  auto txt = open_out(out / "report.txt");
  write_report_text(txt, reports);
}

void do_tag(const ExperimentConfig& config, const RunSeeds& seeds, const EncoderParams& params, const Vocab& vocab,
            const fs::path& out) {
  const TaggedCorpus train = load_tagged_corpus(*config.tag_train, config.tag_scheme);
  const TaggedCorpus dev = load_tagged_corpus(*config.tag_dev, config.tag_scheme);
  const TaggedCorpus test = load_tagged_corpus(*config.tag_test, config.tag_scheme);
  TaggerTrainOptions opts = config.tagging;
  opts.seed = seeds.tagging;
  log_line("fine-tuning " + to_string(config.tag_scheme) + " tagger for " + std::to_string(opts.epochs) + " epochs");
  const FinetuneResult ft = finetune_tagger(params, vocab, train, dev, opts);
  if (ft.unknown_dev_labels)
    log_line("warning: " + std::to_string(ft.unknown_dev_labels) +
             " dev tokens carry labels absent from the train tagset; they are scored as wrong");
  const TaggingScores scores = evaluate_tagger(ft.tagger, vocab, test);

  Table t;
  t.header = {"scheme", "epochs", "best_epoch", "dev_metric", "test_accuracy", "test_span_f1", "unknown_dev_labels",
              "bio_repairs"};
  const double best_dev = ft.best_epoch ? ft.dev_curve[static_cast<std::size_t>(ft.best_epoch - 1)] : 0.0;
  t.add_row({to_string(config.tag_scheme), std::to_string(opts.epochs), std::to_string(ft.best_epoch),
             ft.best_epoch ? format_fixed(best_dev, 6) : "NA", format_fixed(scores.accuracy, 6),
             scores.spans ? format_fixed(scores.spans->f1, 6) : "NA", std::to_string(ft.unknown_dev_labels),
             std::to_string(train.repair_count + dev.repair_count + test.repair_count)});
  auto tsv = open_out(out / "tagging.tsv");
  t.write_tsv(tsv);

  Table curve;
  curve.header = {"epoch", "dev_metric"};
  for (std::size_t e = 0; e < ft.dev_curve.size(); ++e)
    curve.add_row({std::to_string(e + 1), format_fixed(ft.dev_curve[e], 6)});
  auto ctsv = open_out(out / "tagging_curve.tsv");
  curve.write_tsv(ctsv);
}

void do_pad(const ExperimentConfig& config, const RunSeeds& seeds, const EncoderParams& params, const Vocab& vocab,
            const fs::path& out) {
  std::vector<PadRow> rows;
  Table detail;
  detail.header = {"pair", "error", "PAD", "per_domain", "train", "test"};
  for (std::size_t i = 0; i < config.pad_pairs.size(); ++i) {
    const auto& p = config.pad_pairs[i];
    const Corpus a = load_plaintext_corpus(p.path1, p.language);
    const Corpus b = load_plaintext_corpus(p.path2, p.language);
    const PadResult r = proxy_a_distance(a, b, params, vocab, mix_seed(seeds.pad, i), config.pad);
    rows.push_back({p.language, p.domain1, p.domain2, r.pad});
    detail.add_row({p.label, format_fixed(r.error, 6), format_fixed(r.pad, 6), std::to_string(r.per_domain),
                    std::to_string(r.train_size), std::to_string(r.test_size)});
    log_line("PAD " + p.label + " = " + format_fixed(r.pad, 4));
  }
  auto tsv = open_out(out / "pad.tsv");
  write_pad_tsv(tsv, rows);
  auto dtsv = open_out(out / "pad_detail.tsv");
  detail.write_tsv(dtsv);
  Table text;
  text.header = {"language", "domain-1", "domain-2", "PAD"};
  for (const auto& r : rows) text.add_row({r.language, r.domain1, r.domain2, format_fixed(r.pad, 2)});
  auto txt = open_out(out / "pad.txt");
  text.write_aligned(txt);
}

void write_dataset_files(const fs::path& out, const PreparedData& data) {
  write_dataset_tsv(out / "train.tsv", data.grouped);
  write_dataset_tsv(out / "dev.tsv", data.dev);
  data.vocab.save(out / "vocab.txt");
}

}  // namespace

Identifier obtain_identifier(const ExperimentConfig& config) {
  if (config.identifier) return Identifier::load(*config.identifier);
  if (config.langid_corpora.size() < 2) throw Error("no identifier configured");
  std::vector<Corpus> corpora;
  for (const auto& l : config.langid_corpora) corpora.push_back(load_plaintext_corpus(l.path, l.language));
  return Identifier::train(corpora, config.langid_n_max, config.langid_alpha);
}

PreparedData prepare_data(const ExperimentConfig& config, const RunSeeds& seeds) {
  const Corpus creole = in_stage("load", [&] { return load_plaintext_corpus(config.creole, config.creole_language); });
  Corpus dataset = in_stage("mix", [&] {
    if (config.mode == DataMode::creole_only) return creole;
    std::vector<Corpus> aux;
    for (const auto& a : config.aux) aux.push_back(load_plaintext_corpus(a.path, a.language));
    MixPolicy policy;
    policy.target_per_language = config.target_per_language;
    policy.scarce_fraction = config.scarce_fraction;
    policy.dev_ratio = config.dev_ratio;
    policy.seed = seeds.mix;
    return build_mixed_dataset(creole, aux, policy);
  });
  auto [train, dev] = in_stage("split", [&] {
    return config.dev_count ? split_train_dev_count(dataset, *config.dev_count, seeds.split)
                            : split_train_dev(dataset, config.dev_ratio, seeds.split);
  });
  GroupedDataset grouped = in_stage("group", [&] {
    std::optional<Identifier> id;
    if (config.needs_identifier()) id = obtain_identifier(config);
    GroupingOptions opts{config.strategy, config.group_count, config.threshold, seeds.grouping};
    return annotate_groups(train, id ? &*id : nullptr, opts);
  });
  Vocab vocab = in_stage("vocab", [&] { return Vocab::build(train, config.vocab_size, config.min_count); });
  std::optional<DictionarySet> dict;
  if (config.dictionary) dict = in_stage("load", [&] { return load_dictionary(*config.dictionary); });
  Corpus eval_corpus = config.test ? in_stage("load", [&] { return load_plaintext_corpus(*config.test, config.creole_language); })
                                   : dev;
  return {std::move(dataset), std::move(train), std::move(dev), std::move(grouped), std::move(eval_corpus),
          config.test ? "test" : "dev", std::move(vocab), std::move(dict)};
}

std::string model_id(const TrainConfig& train) {
  return train.objective == Objective::erm ? "erm" : "dro-" + to_string(train.strategy);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 15]);
  }
  return hex;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

void write_manifest(const fs::path& dir, const ExperimentConfig& config) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == "manifest.tsv" || rel == "FAILED") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  const RunSeeds seeds = RunSeeds::derive(config.seed);
  Table t;
  t.header = {"key", "value"};
  t.add_row({"config.sha256", sha256_hex(config.config_text)});
  t.add_row({"seed", std::to_string(config.seed)});
  t.add_row({"seed.mix", std::to_string(seeds.mix)});
  t.add_row({"seed.split", std::to_string(seeds.split)});
  t.add_row({"seed.grouping", std::to_string(seeds.grouping)});
  t.add_row({"seed.train", std::to_string(seeds.train)});
  t.add_row({"seed.eval", std::to_string(seeds.eval)});
  t.add_row({"seed.tagging", std::to_string(seeds.tagging)});
  t.add_row({"seed.pad", std::to_string(seeds.pad)});
  for (const auto& f : files) t.add_row({"artifact:" + f, sha256_file(dir / f)});
  auto out = open_out(dir / "manifest.tsv");
  t.write_tsv(out);
}

void build_data_stage(const ExperimentConfig& config, const fs::path& out) {
  fs::create_directories(out);
  const PreparedData data = prepare_data(config, RunSeeds::derive(config.seed));
  in_stage("write", [&] { write_dataset_files(out, data); });
  log_line("train " + std::to_string(data.train.size()) + ", dev " + std::to_string(data.dev.size()) + ", " +
           std::to_string(data.grouped.group_count) + " groups, vocabulary " + std::to_string(data.vocab.size()));
}

void langid_train_stage(const ExperimentConfig& config, const fs::path& out) {
  fs::create_directories(out);
  in_stage("langid", [&] { obtain_identifier(config).save(out / "identifier.tsv"); });
}

void langid_report_stage(const ExperimentConfig& config, const fs::path& out) {
  fs::create_directories(out);
  in_stage("langid", [&] {
    const Identifier id = obtain_identifier(config);
    const Corpus creole = load_plaintext_corpus(config.creole, config.creole_language);
    const LanguageDistribution dist = language_distribution_report(creole, id, config.threshold);
    auto tsv = open_out(out / "langid_histogram.tsv");
    write_histogram_tsv(tsv, dist);
    Table t;
    t.header = {"language", "present", "share"};
    for (std::size_t i = 0; i < id.languages().size(); ++i)
      t.add_row({id.languages()[i], std::to_string(dist.present_counts[i]),
                 format_fixed(static_cast<double>(dist.present_counts[i]) / static_cast<double>(creole.size()), 4)});
    auto txt = open_out(out / "langid_report.txt");
    t.write_aligned(txt);
    txt << "sentences without scorable characters: " << dist.fallback_sentences << '\n';
  });
}

void train_stage(const ExperimentConfig& config, const fs::path& out) {
  fs::create_directories(out);
  const RunSeeds seeds = RunSeeds::derive(config.seed);
  in_stage("write", [&] {
    auto cfg = open_out(out / "config.cfg");
    cfg << config.config_text;
  });
  const PreparedData data = prepare_data(config, seeds);
  in_stage("write", [&] { write_dataset_files(out, data); });
  in_stage("train", [&] { do_train(effective_train_config(config, seeds), data, out, true); });
}

std::vector<EvalReport> eval_stage(const ExperimentConfig& config, const fs::path& out) {
  const RunSeeds seeds = RunSeeds::derive(config.seed);
  PreparedData data = prepare_data(config, seeds);
  return in_stage("eval", [&] {
    data.vocab = Vocab::load(out / "vocab.txt");
    const EncoderParams params = load_checkpoint(out / "best.ckpt");
    std::vector<EvalReport> reports = {do_eval(config, seeds, data, params, model_id(effective_train_config(config, seeds)))};
    write_reports(out, reports);
    return reports;
  });
}

void tag_stage(const ExperimentConfig& config, const fs::path& out) {
  in_stage("tag", [&] {
    if (!config.has_tagging()) throw Error("config has no [tagging] section");
    do_tag(config, RunSeeds::derive(config.seed), load_checkpoint(out / "best.ckpt"), Vocab::load(out / "vocab.txt"),
           out);
  });
}

void pad_stage(const ExperimentConfig& config, const fs::path& out) {
  in_stage("pad", [&] {
    if (config.pad_pairs.empty()) throw Error("config has no [divergence] pair.* entries");
    do_pad(config, RunSeeds::derive(config.seed), load_checkpoint(out / "best.ckpt"), Vocab::load(out / "vocab.txt"),
           out);
  });
}

std::vector<EvalReport> run_experiment(const ExperimentConfig& config, const fs::path& out) {
  fs::create_directories(out);
  fs::remove(out / "FAILED");
  fs::remove(out / "manifest.tsv");
  try {
    const RunSeeds seeds = RunSeeds::derive(config.seed);
    in_stage("write", [&] {
      auto cfg = open_out(out / "config.cfg");
      cfg << config.config_text;
    });
    const PreparedData data = prepare_data(config, seeds);
    in_stage("write", [&] { write_dataset_files(out, data); });
    const TrainConfig t = effective_train_config(config, seeds);
    const TrainResult trained = in_stage("train", [&] { return do_train(t, data, out, true); });
    std::vector<EvalReport> reports =
        in_stage("eval", [&] { return std::vector<EvalReport>{do_eval(config, seeds, data, trained.best_params, model_id(t))}; });
    in_stage("eval", [&] { write_reports(out, reports); });
    if (config.has_tagging()) in_stage("tag", [&] { do_tag(config, seeds, trained.best_params, data.vocab, out); });
    if (!config.pad_pairs.empty())
      in_stage("pad", [&] { do_pad(config, seeds, trained.best_params, data.vocab, out); });
    in_stage("manifest", [&] { write_manifest(out, config); });
    return reports;
  } catch (const StageError& e) {
    std::ofstream failed(out / "FAILED", std::ios::binary);
    failed << "stage\t" << e.stage() << "\nerror\t" << e.what() << '\n';
    throw;
  }
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "preset") return SweepAxis::preset;
  if (name == "weight_decay") return SweepAxis::weight_decay;
  throw std::invalid_argument("unknown sweep axis '" + std::string(name) + "' (expected preset or weight_decay)");
}

std::string to_string(SweepAxis axis) { return axis == SweepAxis::preset ? "preset" : "weight_decay"; }

std::vector<std::string> default_sweep_values(SweepAxis axis) {
  if (axis == SweepAxis::preset) return {"tiny", "small", "base"};
  return {"0.01", "0.05", "0.10", "0.30"};
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values,
                                const fs::path& out) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  struct Run {
    Objective objective;
    std::string value;
  };
  std::vector<Run> runs;
  for (const auto& v : values) {
    if (axis == SweepAxis::preset) {
      SizePreset::by_name(v);
    } else {
      double wd = 0.0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), wd);
      if (ec != std::errc() || p != v.data() + v.size() || wd < 0.0)
        throw std::invalid_argument("bad weight_decay value '" + v + "'");
    }
  }
  if (axis == SweepAxis::weight_decay) {
    runs.push_back({Objective::erm, shortest(config.train.weight_decay)});
  } else {
    for (const auto& v : values) runs.push_back({Objective::erm, v});
  }
  for (const auto& v : values) runs.push_back({Objective::dro, v});

  ExperimentConfig base = config;
  base.strategy = GroupStrategy::language;
  const RunSeeds seeds = RunSeeds::derive(base.seed);
  fs::create_directories(out);
  const PreparedData data = prepare_data(base, seeds);

  std::vector<SweepRow> rows;
  for (const auto& run : runs) {
    TrainConfig t = effective_train_config(base, seeds);
    t.objective = run.objective;
    if (axis == SweepAxis::preset) t.preset = SizePreset::by_name(run.value);
    else t.weight_decay = std::stod(run.value);
    const std::string objective = model_id(t);
    const fs::path dir = out / (objective + "-" + to_string(axis) + "-" + run.value);
    fs::create_directories(dir);
    const TrainResult trained = in_stage("train", [&] { return do_train(t, data, dir, false); });
    EvalReport report = in_stage("eval", [&] { return do_eval(base, seeds, data, trained.best_params, objective); });
    in_stage("eval", [&] { write_reports(dir, {report}); });
    rows.push_back({objective, run.value, std::move(report)});
  }
  auto tsv = open_out(out / "sweep.tsv");
  write_sweep_tsv(tsv, axis, rows);
  auto txt = open_out(out / "sweep.txt");
  write_sweep_text(txt, axis, rows);
  return rows;
}

namespace {
Table sweep_table(SweepAxis axis, const std::vector<SweepRow>& rows, int digits, double scale) {
  Table t;
  t.header = {"objective", to_string(axis), "P@1", "P_D@1", "PLL"};
  auto p1 = [&](const std::map<int, double>& m) {
    auto it = m.find(1);
    return it == m.end() ? std::string("NA") : format_fixed(it->second * scale, digits);
  };
  for (const auto& r : rows)
    t.add_row({r.objective, r.value, p1(r.report.p_at_k), p1(r.report.pd_at_k), format_fixed(r.report.pll, digits)});
  return t;
}
}  // namespace

void write_sweep_tsv(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows) {
  sweep_table(axis, rows, 6, 1.0).write_tsv(out);
}

void write_sweep_text(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows) {
  sweep_table(axis, rows, 2, 100.0).write_aligned(out);
}

}  // namespace creole
