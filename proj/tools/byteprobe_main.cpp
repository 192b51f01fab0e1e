#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "byteprobe/attrib.hpp"
#include "byteprobe/cluster.hpp"
#include "byteprobe/cnn.hpp"
#include "byteprobe/corpus.hpp"
#include "byteprobe/errors.hpp"
#include "byteprobe/parallel.hpp"
#include "byteprobe/pe.hpp"
#include "byteprobe/probe.hpp"
#include "byteprobe/report.hpp"
#include "byteprobe/train.hpp"
#include "byteprobe/x86.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace byteprobe;

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

struct SplitChoice {
  std::string name = "all";  // all | train | val | test
  double train_frac = 0.6;
  double val_frac = 0.15;
};

std::vector<LabeledSample> pick_split(const std::vector<LabeledSample>& samples,
                                      const SplitChoice& c) {
  if (c.name == "all") return samples;
  SplitCorpus s = split_corpus(samples, c.train_frac, c.val_frac);
  if (c.name == "train") return s.train;
  if (c.name == "val") return s.validation;
  if (c.name == "test") return s.test;
  throw InputError("unknown split \"" + c.name + "\"");
}

json metrics_to_json(const Metrics& m) {
  return json{{"f1", m.f1},         {"auc", m.auc}, {"precision", m.precision},
              {"recall", m.recall}, {"tp", m.tp},   {"fp", m.fp},
              {"tn", m.tn},         {"fn", m.fn}};
}

json instructions_to_json(const std::vector<Instruction>& insns) {
  json arr = json::array();
  for (const Instruction& i : insns) {
    arr.push_back({{"offset", i.offset}, {"length", i.length}, {"text", i.text()}});
  }
  return arr;
}

TrainConfig regime_train_config(const std::string& regime) {
  RegimesConfig base = RegimesConfig::desk_default();
  for (const RegimeConfig& rc : base.regimes) {
    if (rc.name == regime) return rc.train;
  }
  throw InputError("unknown regime \"" + regime + "\" (small|baseline|dropout)");
}

int cmd_gen_corpus(const std::string& spec_path, const std::string& out_dir,
                   std::optional<std::size_t> count, std::optional<std::uint64_t> seed) {
  CorpusSpec spec;
  if (!spec_path.empty()) spec = corpus_spec_from_json_text(read_text(spec_path));
  if (count) spec.count = *count;
  if (seed) spec.seed = *seed;
  spec.validate();
  GeneratedCorpus corpus = generate_corpus(spec);
  write_corpus(corpus, out_dir);
  std::size_t malware = 0;
  for (const auto& e : corpus.manifest.entries) malware += e.label;
  std::cout << "wrote " << corpus.samples.size() << " files (" << malware << " malware) to "
            << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& corpus_dir, const std::string& regime,
              const std::string& model_path, std::size_t input_len,
              std::optional<std::size_t> epochs, std::optional<double> lr,
              std::optional<std::uint64_t> seed, std::optional<std::size_t> batch,
              double train_frac, double val_frac) {
  GeneratedCorpus corpus = load_corpus(corpus_dir);
  SplitCorpus split = split_corpus(corpus.samples, train_frac, val_frac);

  ModelConfig mc = ModelConfig::desk_default();
  mc.input_len = input_len;
  if (regime == "dropout") mc.dropout_rates = ModelConfig::standard_dropout_rates();
  TrainConfig tc = regime_train_config(regime);
  if (epochs) tc.epochs = *epochs;
  if (lr) tc.learning_rate = *lr;
  if (seed) tc.seed = *seed;
  if (batch) tc.batch_size = *batch;

  std::vector<LabeledSample> train_set =
      regime == "small" ? balanced_subset(split.train) : split.train;
  CnnModel model = build_model(mc, tc.seed);
  TrainHistory history = train(model, train_set, split.validation, tc);
  save_model(model, model_path);

  json meta;
  meta["regime"] = tc.regime;
  meta["train_samples"] = train_set.size();
  meta["validation_samples"] = split.validation.size();
  meta["epochs"] = tc.epochs;
  meta["learning_rate"] = tc.learning_rate;
  meta["momentum"] = tc.momentum;
  meta["decay_factor"] = tc.decay.factor;
  meta["decay_every_epochs"] = tc.decay.every_epochs;
  meta["batch_size"] = tc.batch_size;
  meta["seed"] = tc.seed;
  meta["input_len"] = mc.input_len;
  meta["train_loss"] = history.train_loss;
  meta["val_loss"] = history.val_loss;
  write_text_file(model_path + ".meta.json", meta.dump(2) + "\n");
  std::cout << "trained " << regime << " model on " << train_set.size() << " samples; final loss "
            << fmt_double(history.train_loss.back()) << "; saved to " << model_path << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& corpus_dir,
             const std::string& out_dir, const SplitChoice& split) {
  CnnModel model = load_model(model_path);
  GeneratedCorpus corpus = load_corpus(corpus_dir);
  Metrics m = evaluate(model, pick_split(corpus.samples, split));
  json report = metrics_to_json(m);
  report["split"] = split.name;
  report["model"] = fs::path(model_path).filename().string();
  std::cout << "F1=" << fmt_double(m.f1) << " AUC=" << fmt_double(m.auc) << " (split "
            << split.name << ")\n";
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_text_file((fs::path(out_dir) / "eval.json").string(), report.dump(2) + "\n");
  }
  return 0;
}

int cmd_analyze_embedding(const std::string& model_path, const std::string& out_dir) {
  CnnModel model = load_model(model_path);
  EmbeddingAnalysis analysis = embedding_outliers(model);
  ensure_dir(out_dir);

  std::vector<std::vector<std::string>> rows;
  std::vector<SvgPoint> points;
  std::size_t outliers = 0;
  for (const EmbeddingPoint& p : analysis.points) {
    rows.push_back({std::to_string(p.symbol), std::to_string(p.cluster),
                    p.is_outlier ? "1" : "0", fmt_double(p.x), fmt_double(p.y)});
    outliers += p.is_outlier;
    SvgPoint sp;
    sp.x = p.x;
    sp.y = p.y;
    sp.color = p.is_outlier ? "#c0392b" : (p.is_padding ? "#8e44ad" : "#7f8c8d");
    sp.label = (p.is_padding ? std::string("pad") : std::to_string(p.symbol)) +
               (p.is_outlier ? " outlier" : "");
    points.push_back(std::move(sp));
  }
  write_csv((fs::path(out_dir) / "embedding.csv").string(), {"byte", "cluster", "is_outlier", "x", "y"},
            rows);
  write_text_file((fs::path(out_dir) / "embedding.svg").string(),
                  svg_scatter("Embedding space (MDS projection; red = outlier)", points));

  json summary;
  summary["outliers"] = outliers;
  summary["clusters"] = analysis.clusters.cluster_count();
  summary["warnings"] = analysis.warnings;
  summary["final_stress"] = analysis.projection.final_stress;
  write_text_file((fs::path(out_dir) / "embedding.json").string(), summary.dump(2) + "\n");
  std::cout << "embedding: " << analysis.clusters.cluster_count() << " clusters, " << outliers
            << " outliers\n";
  return 0;
}

int cmd_analyze_filters(const std::string& model_path, const std::string& corpus_dir,
                        std::size_t k, const std::string& out_dir, const SplitChoice& split) {
  CnnModel model = load_model(model_path);
  GeneratedCorpus corpus = load_corpus(corpus_dir);
  const std::vector<LabeledSample> samples = pick_split(corpus.samples, split);

  std::vector<std::vector<ActivationRecord>> per_sample(samples.size());
  // Extraction is per-sample independent; the model is shared read-only.
  parallel_for(samples.size(), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) per_sample[i] = top_k_activations(model, samples[i], k);
  });
  std::vector<ActivationRecord> records;
  for (auto& rs : per_sample) {
    records.insert(records.end(), rs.begin(), rs.end());
  }

  ensure_dir(out_dir);
  std::vector<std::vector<std::string>> act_rows;
  for (const ActivationRecord& r : records) {
    act_rows.push_back({r.sample_id, std::to_string(r.label), std::to_string(r.filter),
                        std::to_string(r.offset), fmt_double(r.value)});
  }
  write_csv((fs::path(out_dir) / "activations.csv").string(),
            {"sample", "class", "filter", "offset", "value"}, act_rows);

  const std::size_t filters = model.config.layers[0].filters;
  ClassSplitHistogram fh = aggregate_by_filter(records, filters);
  ClassSplitHistogram oh = aggregate_by_offset(records, 0);
  auto hist_rows = [](const ClassSplitHistogram& h) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < h.keys.size(); ++i) {
      rows.push_back({std::to_string(h.keys[i]), "1", std::to_string(h.malware[i])});
      rows.push_back({std::to_string(h.keys[i]), "0", std::to_string(h.goodware[i])});
    }
    return rows;
  };
  write_csv((fs::path(out_dir) / "filter_histogram.csv").string(), {"filter", "class", "count"},
            hist_rows(fh));
  write_csv((fs::path(out_dir) / "offset_histogram.csv").string(), {"bucket", "class", "count"},
            hist_rows(oh));

  auto to_series = [](const ClassSplitHistogram& h) {
    SvgSeries mal{"malware", "#c0392b", {}};
    SvgSeries good{"goodware", "#2980b9", {}};
    for (std::size_t i = 0; i < h.keys.size(); ++i) {
      mal.values.push_back(static_cast<double>(h.malware[i]));
      good.values.push_back(static_cast<double>(h.goodware[i]));
    }
    return std::vector<SvgSeries>{mal, good};
  };
  std::vector<std::string> filter_labels, offset_labels;
  for (std::size_t key : fh.keys) filter_labels.push_back(std::to_string(key));
  for (std::size_t key : oh.keys) offset_labels.push_back(std::to_string(key));
  write_text_file((fs::path(out_dir) / "filter_histogram.svg").string(),
                  svg_bar_chart("Top activations per first-layer filter", filter_labels, to_series(fh)));
  write_text_file((fs::path(out_dir) / "offset_histogram.svg").string(),
                  svg_bar_chart("Top activations by file offset", offset_labels, to_series(oh)));

  std::cout << "extracted " << records.size() << " activation records from " << samples.size()
            << " samples\n";
  return 0;
}

int cmd_explain(const std::string& model_path, const std::string& file_path,
                const std::string& background_dir, std::size_t n_samples, std::uint64_t seed,
                std::size_t background_count, std::size_t top_n, const std::string& out_dir) {
  CnnModel model = load_model(model_path);
  const std::vector<std::uint8_t> bytes = read_file(file_path);
  GeneratedCorpus background = load_corpus(background_dir);
  if (background.samples.empty()) throw InputError("background corpus is empty");

  std::vector<std::vector<int>> bg_symbols;
  const std::size_t stride = std::max<std::size_t>(1, background.samples.size() / std::max<std::size_t>(1, background_count));
  for (std::size_t i = 0; i < background.samples.size() && bg_symbols.size() < background_count;
       i += stride) {
    bg_symbols.push_back(preprocess(background.samples[i].bytes, model.config.input_len));
  }

  AttributionConfig cfg;
  cfg.n_samples = n_samples;
  cfg.seed = seed;
  const std::vector<int> symbols = preprocess(bytes, model.config.input_len);
  ByteAttribution attr = gradient_shap(model, symbols, bg_symbols, cfg);
  std::vector<Segment> segs = segment(attr);

  PeImage pe = parse_pe(bytes);
  RegionMap regions = RegionMap::build(pe);
  std::vector<AnnotatedSegment> top = top_segments(segs, pe, regions, bytes, top_n);

  json report;
  report["sample"] = fs::path(file_path).filename().string();
  report["model_output"] = attr.model_output;
  report["expected_background"] = attr.expected_background;
  report["n_samples"] = cfg.n_samples;
  report["seed"] = cfg.seed;
  json seg_arr = json::array();
  for (const Segment& s : segs) {
    json sj{{"start", s.start}, {"end", s.end}, {"value", s.value}};
    if (s.start < bytes.size()) {
      const Region& r = regions.at(s.start);
      sj["region"] = region_kind_name(r.kind);
      if (!r.detail.empty()) sj["detail"] = r.detail;
    } else {
      sj["region"] = "Padding(input)";
    }
    seg_arr.push_back(std::move(sj));
  }
  report["segments"] = seg_arr;
  json top_arr = json::array();
  for (const AnnotatedSegment& a : top) {
    top_arr.push_back({{"start", a.seg.start},
                       {"end", a.seg.end},
                       {"value", a.seg.value},
                       {"region", a.region},
                       {"detail", a.detail},
                       {"feature", a.feature},
                       {"strings", a.strings},
                       {"instructions", instructions_to_json(a.instructions)}});
  }
  report["top_segments"] = top_arr;

  ensure_dir(out_dir);
  const std::string stem = fs::path(file_path).stem().string();
  write_text_file((fs::path(out_dir) / ("explain_" + stem + ".json")).string(),
                  report.dump(2) + "\n");
  std::vector<SvgSpanBar> bars;
  for (const Segment& s : segs) {
    SvgSpanBar bar;
    bar.x0 = static_cast<double>(s.start);
    bar.x1 = static_cast<double>(s.end);
    bar.value = s.value;
    bar.label = "[" + std::to_string(s.start) + "," + std::to_string(s.end) + ") " +
                fmt_double(s.value);
    bars.push_back(std::move(bar));
  }
  write_text_file((fs::path(out_dir) / ("explain_" + stem + ".svg")).string(),
                  svg_span_bars("Segment attribution by offset (red = toward malware)",
                                static_cast<double>(model.config.input_len), bars));
  std::cout << "f(x)=" << fmt_double(attr.model_output) << ", " << segs.size() << " segments, "
            << top.size() << " annotated; report in " << out_dir << "\n";
  return 0;
}

int cmd_annotate(const std::string& file_path, std::size_t offset, std::size_t window,
                 const std::string& out_dir) {
  const std::vector<std::uint8_t> bytes = read_file(file_path);
  PeImage pe = parse_pe(bytes);
  RegionMap regions = RegionMap::build(pe);

  json report;
  report["file"] = fs::path(file_path).filename().string();
  report["offset"] = offset;
  if (offset >= bytes.size()) {
    report["region"] = "Padding(input)";
    std::cout << "offset " << offset << ": past end of file (" << bytes.size() << " bytes)\n";
  } else {
    const Region& r = regions.at(offset);
    report["region"] = region_kind_name(r.kind);
    if (!r.detail.empty()) report["detail"] = r.detail;
    AnnotatedWindow win = annotate_window(bytes, offset, window);
    report["window_start"] = win.start;
    report["window_end"] = win.end;
    report["strings"] = win.string_view;
    report["instructions"] = instructions_to_json(win.instructions);
    std::cout << "offset " << offset << ": " << region_kind_name(r.kind)
              << (r.detail.empty() ? "" : " (" + r.detail + ")") << "\n";
    std::cout << "strings: " << win.string_view << "\n";
    for (const Instruction& insn : win.instructions) {
      std::cout << "  +" << insn.offset << ": " << insn.text() << "\n";
    }
  }
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_text_file((fs::path(out_dir) / "annotate.json").string(), report.dump(2) + "\n");
  }
  return 0;
}

int cmd_run_regimes(const std::string& corpus_dir, const std::string& out_dir,
                    std::size_t input_len, std::optional<std::size_t> epochs) {
  GeneratedCorpus corpus = load_corpus(corpus_dir);
  RegimesConfig cfg = RegimesConfig::desk_default();
  cfg.model.input_len = input_len;
  if (epochs) {
    for (RegimeConfig& rc : cfg.regimes) rc.train.epochs = *epochs;
  }
  std::vector<RegimeResult> results = run_regimes(corpus.samples, cfg);

  ensure_dir(out_dir);
  std::vector<std::vector<std::string>> rows;
  json report = json::array();
  for (const RegimeResult& r : results) {
    save_model(r.model, (fs::path(out_dir) / (r.name + ".bscn")).string());
    rows.push_back({r.name, fmt_double(r.test_metrics.f1), fmt_double(r.test_metrics.auc)});
    json j = metrics_to_json(r.test_metrics);
    j["regime"] = r.name;
    j["train_loss"] = r.history.train_loss;
    j["val_loss"] = r.history.val_loss;
    report.push_back(std::move(j));
    std::cout << r.name << ": F1=" << fmt_double(r.test_metrics.f1)
              << " AUC=" << fmt_double(r.test_metrics.auc) << "\n";
  }
  write_csv((fs::path(out_dir) / "regimes.csv").string(), {"regime", "f1", "auc"}, rows);
  write_text_file((fs::path(out_dir) / "regimes.json").string(), report.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"byteprobe: byte-level CNN malware classifier and activation analysis"};
  app.require_subcommand(1);

  // gen-corpus
  std::string spec_path, out_dir = "out";
  std::optional<std::size_t> count;
  std::optional<std::uint64_t> seed_u64;
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic PE corpus");
  gen->add_option("--spec", spec_path, "corpus spec JSON (defaults when omitted)");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--count", count, "override sample count");
  gen->add_option("--seed", seed_u64, "override seed");

  // train
  std::string corpus_dir, regime = "baseline", model_path = "model.bscn";
  std::size_t input_len = 4096;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  double train_frac = 0.6, val_frac = 0.15;
  auto* train_cmd = app.add_subcommand("train", "train a regime model on a corpus");
  train_cmd->add_option("--corpus", corpus_dir, "corpus directory")->required();
  train_cmd->add_option("--regime", regime, "small|baseline|dropout");
  train_cmd->add_option("--model", model_path, "output model path")->required();
  train_cmd->add_option("--input-len", input_len, "model input length");
  train_cmd->add_option("--epochs", epochs, "override epochs");
  train_cmd->add_option("--lr", lr, "override learning rate");
  train_cmd->add_option("--seed", seed_u64, "override seed");
  train_cmd->add_option("--batch", batch, "override batch size");
  train_cmd->add_option("--train-frac", train_frac, "train split fraction");
  train_cmd->add_option("--val-frac", val_frac, "validation split fraction");

  // eval
  std::string eval_model, eval_corpus, eval_out;
  SplitChoice eval_split;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model (F1 at 0.5, AUC)");
  eval_cmd->add_option("--model", eval_model)->required();
  eval_cmd->add_option("--corpus", eval_corpus)->required();
  eval_cmd->add_option("--out", eval_out, "report directory");
  eval_cmd->add_option("--split", eval_split.name, "all|train|val|test");

  // analyze-embedding
  std::string emb_model, emb_out = "out";
  auto* emb_cmd = app.add_subcommand("analyze-embedding", "cluster & project the embedding rows");
  emb_cmd->add_option("--model", emb_model)->required();
  emb_cmd->add_option("--out", emb_out, "report directory");

  // analyze-filters
  std::string flt_model, flt_corpus, flt_out = "out";
  std::size_t top_k = 100;
  SplitChoice flt_split;
  auto* flt_cmd = app.add_subcommand("analyze-filters", "top-k first-layer activation analysis");
  flt_cmd->add_option("--model", flt_model)->required();
  flt_cmd->add_option("--corpus", flt_corpus)->required();
  flt_cmd->add_option("--k", top_k, "activations per sample");
  flt_cmd->add_option("--out", flt_out, "report directory");
  flt_cmd->add_option("--split", flt_split.name, "all|train|val|test");

  // explain
  std::string exp_model, exp_file, exp_background, exp_out = "out";
  std::size_t n_samples = 1000, background_count = 32, exp_top = 5;
  std::uint64_t exp_seed = 0;
  auto* exp_cmd = app.add_subcommand("explain", "per-byte attribution with segment report");
  exp_cmd->add_option("--model", exp_model)->required();
  exp_cmd->add_option("--file", exp_file)->required();
  exp_cmd->add_option("--background", exp_background, "background corpus directory")->required();
  exp_cmd->add_option("--n-samples", n_samples, "Monte Carlo draws");
  exp_cmd->add_option("--seed", exp_seed);
  exp_cmd->add_option("--background-count", background_count, "background samples used");
  exp_cmd->add_option("--top", exp_top, "annotated segments per sign");
  exp_cmd->add_option("--out", exp_out, "report directory");

  // annotate
  std::string ann_file, ann_out;
  std::size_t ann_offset = 0, ann_window = 43;
  auto* ann_cmd = app.add_subcommand("annotate", "region + strings/disassembly at an offset");
  ann_cmd->add_option("--file", ann_file)->required();
  ann_cmd->add_option("--offset", ann_offset)->required();
  ann_cmd->add_option("--window", ann_window, "window size in bytes");
  ann_cmd->add_option("--out", ann_out, "report directory");

  // run-regimes
  std::string reg_corpus, reg_out = "out";
  std::size_t reg_input_len = 4096;
  std::optional<std::size_t> reg_epochs;
  auto* reg_cmd = app.add_subcommand("run-regimes", "train & evaluate small/baseline/dropout");
  reg_cmd->add_option("--corpus", reg_corpus)->required();
  reg_cmd->add_option("--out", reg_out)->required();
  reg_cmd->add_option("--input-len", reg_input_len);
  reg_cmd->add_option("--epochs", reg_epochs, "override epochs for all regimes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_corpus(spec_path, out_dir, count, seed_u64);
    if (train_cmd->parsed()) {
      return cmd_train(corpus_dir, regime, model_path, input_len, epochs, lr, seed_u64, batch,
                       train_frac, val_frac);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_model, eval_corpus, eval_out, eval_split);
    if (emb_cmd->parsed()) return cmd_analyze_embedding(emb_model, emb_out);
    if (flt_cmd->parsed()) {
      return cmd_analyze_filters(flt_model, flt_corpus, top_k, flt_out, flt_split);
    }
    if (exp_cmd->parsed()) {
      return cmd_explain(exp_model, exp_file, exp_background, n_samples, exp_seed,
                         background_count, exp_top, exp_out);
    }
    if (ann_cmd->parsed()) return cmd_annotate(ann_file, ann_offset, ann_window, ann_out);
    if (reg_cmd->parsed()) return cmd_run_regimes(reg_corpus, reg_out, reg_input_len, reg_epochs);
  } catch (const NotAPeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MetricError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
