#include "vidret/ablation.hpp"
#include "vidret/checkpoint.hpp"
#include "vidret/evaluator.hpp"
#include "vidret/report.hpp"
#include "vidret/stats.hpp"
#include "vidret/trainer.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vidret;

namespace {

json parse_set_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

Config config_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  Config cfg = path.empty() ? desk_profile() : load_config(path);
  json overrides = json::object();
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + s);
    overrides[s.substr(0, eq)] = parse_set_value(s.substr(eq + 1));
  }
  apply_overrides(cfg, overrides);
  validate(cfg);
  return cfg;
}

Corpus corpus_for(const Config& cfg, const std::string& data_dir) {
  if (data_dir.empty()) return corpus_from_config(cfg);
  std::optional<Eigen::Index> ext;
  if (cfg.text.external_enabled) ext = cfg.text.external_dim;
  return load_corpus_dir(data_dir, ext);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-branch video representation for text-to-video retrieval"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints");
  std::string train_config, train_out, train_data, train_report, train_plots, train_resume;
  std::vector<std::string> train_sets;
  train_cmd->add_option("--config", train_config, "JSON config file (default: desk profile)");
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  train_cmd->add_option("--set", train_sets, "Override a config key: key=value");
  train_cmd->add_option("--data", train_data, "Corpus directory (overrides data.dir)");
  train_cmd->add_option("--report", train_report, "Append a JSONL run record here");
  train_cmd->add_option("--emit-plots", train_plots, "Write SVG training curves to this directory");
  train_cmd->add_option("--resume", train_resume, "Continue from a checkpoint");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  std::string grad_config;
  std::vector<std::string> grad_sets;
  std::size_t grad_pairs = 3;
  double grad_eps = 1e-5, grad_floor = 1e-6;
  grad_cmd->add_option("--config", grad_config, "JSON config file (default: desk profile)");
  grad_cmd->add_option("--set", grad_sets, "Override a config key: key=value");
  grad_cmd->add_option("--pairs", grad_pairs, "Video-caption pairs in the probe batch")->capture_default_str();
  grad_cmd->add_option("--eps", grad_eps, "Finite-difference step")->capture_default_str();
  grad_cmd->add_option("--floor", grad_floor, "Relative-error denominator floor")->capture_default_str();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_split = "test", eval_direction = "t2v", eval_branch = "both", eval_space = "raw";
  std::string eval_data, eval_dump, eval_report;
  double eval_threshold = 0.2;
  bool eval_graded = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--split", eval_split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--direction", eval_direction, "t2v or v2v")->capture_default_str();
  eval_cmd->add_option("--branch", eval_branch, "v2v feature: preview, intensive or both")->capture_default_str();
  eval_cmd->add_option("--space", eval_space, "v2v feature space: raw or latent")->capture_default_str();
  eval_cmd->add_option("--threshold", eval_threshold, "v2v relevance threshold")->capture_default_str();
  eval_cmd->add_flag("--graded", eval_graded, "v2v nDCG with graded gains");
  eval_cmd->add_option("--data", eval_data, "Corpus directory (default: from the checkpoint config)");
  eval_cmd->add_option("--dump-attention", eval_dump, "Write per-video attention weights as JSON");
  eval_cmd->add_option("--report", eval_report, "Append a JSONL run record here");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation grid");
  std::string ablate_grid, ablate_report, ablate_table;
  ablate_cmd->add_option("--grid", ablate_grid, "Grid JSON file")->required();
  ablate_cmd->add_option("--report", ablate_report, "Append one JSONL record per run");
  ablate_cmd->add_option("--table", ablate_table, "Also write the text table to this file");

  // v2v-annotate
  auto* annot_cmd = app.add_subcommand("v2v-annotate", "Derive video-to-video relevance from captions");
  std::string annot_config, annot_data, annot_split = "test", annot_out;
  double annot_threshold = 0.2;
  annot_cmd->add_option("--config", annot_config, "JSON config (corpus source)");
  annot_cmd->add_option("--data", annot_data, "Corpus directory");
  annot_cmd->add_option("--split", annot_split, "train, val or test")->capture_default_str();
  annot_cmd->add_option("--threshold", annot_threshold, "Relevance threshold (strict)")->capture_default_str();
  annot_cmd->add_option("--out", annot_out, "Write the annotation as JSON");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Parameter count and multiply-accumulates per pair");
  std::string stats_config, stats_profile;
  std::vector<std::string> stats_sets;
  int stats_frames = 20, stats_words = 10, stats_vocab = 0;
  stats_cmd->add_option("--config", stats_config, "JSON config file");
  stats_cmd->add_option("--profile", stats_profile, "desk or paper (instead of --config)");
  stats_cmd->add_option("--set", stats_sets, "Override a config key: key=value");
  stats_cmd->add_option("--frames", stats_frames, "Frames per video")->capture_default_str();
  stats_cmd->add_option("--words", stats_words, "Words per sentence")->capture_default_str();
  stats_cmd->add_option("--vocab", stats_vocab,
                        "Use a placeholder vocabulary of this many words instead of the corpus one");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus directory");
  std::string synth_config, synth_out;
  std::vector<std::string> synth_sets;
  synth_cmd->add_option("--config", synth_config, "JSON config file");
  synth_cmd->add_option("--set", synth_sets, "Override a config key: key=value");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      Config cfg = config_with_overrides(train_config, train_sets);
      if (!train_data.empty()) cfg.data.dir = train_data;
      const Corpus corpus = corpus_from_config(cfg);
      std::optional<Checkpoint> resume;
      std::unique_ptr<Model> model;
      if (!train_resume.empty()) {
        resume = load_checkpoint(train_resume);
        model = model_from_checkpoint(*resume);
      } else {
        model = build_model(cfg, corpus.train, cfg.train.seed);
      }
      const Config& used = model->config();
      std::cout << "config " << config_hash(used) << ": " << model->params().scalar_count() << " parameters, "
                << corpus.train.captions().size() << " training captions\n";
      TrainOptions opts;
      opts.out_dir = train_out;
      opts.resume = resume ? &*resume : nullptr;
      opts.restore_best = true;
      opts.on_epoch = [](const EpochRecord& e) {
        std::cout << "epoch " << e.epoch << "  loss " << format_fixed(e.train_loss, 4) << "  objective "
                  << format_fixed(e.objective, 2) << "  lr " << e.lr << (e.improved ? "  *" : "")
                  << (e.lr_halved ? "  lr/2" : "") << '\n';
        return true;
      };
      const TrainResult res = train(*model, corpus, opts);
      write_text(fs::path(train_out) / "log.json", to_json(res.log).dump(2) + "\n");

      std::vector<std::pair<std::string, RankMetrics>> rows;
      const RankMetrics val = evaluate_t2v(*model, corpus.val);
      rows.emplace_back("val", val);
      std::optional<RankMetrics> test;
      if (!corpus.test.empty()) {
        test = evaluate_t2v(*model, corpus.test);
        rows.emplace_back("test", *test);
      }
      std::cout << "best epoch " << res.log.best_epoch << (res.log.early_stopped ? " (early stop)" : "") << "\n"
                << metrics_table(rows, "Split");
      if (!train_plots.empty()) {
        for (const auto& p : write_training_plots(res.log, train_plots)) std::cout << "wrote " << p.string() << '\n';
      }
      if (!train_report.empty()) {
        json metrics = {{"val", to_json(val)}};
        if (test) metrics["test"] = to_json(*test);
        append_jsonl(train_report,
                     run_record(make_run_id("train", config_hash(used)), config_hash(used), "train", metrics,
                                {{"epochs", res.log.epochs.size()},
                                 {"best_epoch", res.log.best_epoch},
                                 {"lr_halvings", res.log.lr_halvings},
                                 {"checkpoint", res.best_checkpoint.string()}}));
      }
      return 0;
    }

    if (*grad_cmd) {
      const Config cfg = config_with_overrides(grad_config, grad_sets);
      const Corpus corpus = corpus_from_config(cfg);
      auto model = build_model(cfg, corpus.train, cfg.train.seed);
      const GradCheckReport rep =
          gradient_check(model->params(), batch_loss_fn(*model, corpus.train, grad_pairs), grad_eps, grad_floor);
      std::vector<std::vector<std::string>> rows;
      for (const auto& g : rep.groups) {
        std::ostringstream mx, mn, ab;
        mx << std::scientific << std::setprecision(2) << g.max_rel;
        mn << std::scientific << std::setprecision(2) << g.mean_rel;
        ab << std::scientific << std::setprecision(2) << g.max_abs;
        rows.push_back({g.name, std::to_string(g.coords), mx.str(), mn.str(), ab.str()});
      }
      std::cout << format_table({"Parameter", "Coords", "Max rel", "Mean rel", "Max abs"}, rows);
      std::cout << "coordinates " << rep.coords << ", max relative error " << std::scientific << rep.max_rel
                << ", mean " << rep.mean_rel << std::defaultfloat << ", " << format_fixed(rep.seconds, 1) << " s\n";
      return rep.max_rel < 1e-4 ? 0 : 2;
    }

    if (*eval_cmd) {
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      auto model = model_from_checkpoint(ck);
      const Corpus corpus = corpus_for(ck.config, eval_data);
      const CorpusSplit& split = corpus.split(eval_split);
      const EncodedSplit enc = encode_split(*model, split, !eval_dump.empty());
      const Direction direction = parse_direction(eval_direction);
      RankMetrics metrics;
      json extra = {{"split", eval_split}, {"direction", eval_direction}, {"checkpoint", eval_ckpt}};
      if (direction == Direction::TextToVideo) {
        const SimilarityMatrix s = text_to_video(*model, enc);
        metrics = rank_metrics(s.scores, text_to_video_truth(split, s));
      } else {
        const BranchSel branch = parse_branch_sel(eval_branch);
        const FeatureSpace space = parse_feature_space(eval_space);
        const V2VAnnotation ann = build_v2v_annotations(split, token_jaccard, eval_threshold);
        metrics = evaluate_v2v(video_to_video(*model, enc, branch, space), ann, eval_graded);
        const RankMetrics baseline = evaluate_v2v(mean_frame_similarity(split), ann, eval_graded);
        std::cout << metrics_table({{to_string(branch) + "/" + to_string(space), metrics},
                                    {"mean frame feature", baseline}},
                                   "Feature");
        extra.update({{"branch", eval_branch},
                      {"space", eval_space},
                      {"threshold", eval_threshold},
                      {"sentence_sim", ann.sentence_sim},
                      {"graded", eval_graded},
                      {"queries", ann.queries.size()},
                      {"baseline", to_json(baseline)}});
      }
      if (direction == Direction::TextToVideo) std::cout << metrics_table({{eval_split, metrics}}, "Split");
      if (!eval_dump.empty()) {
        json dump = json::object();
        for (std::size_t v = 0; v < enc.video_ids.size(); ++v) {
          json per = json::object();
          const auto& windows = model->has_intensive_branch() ? model->intensive_params().windows : std::vector<int>{};
          for (std::size_t k = 0; k < enc.attention[v].size(); ++k) {
            per[std::to_string(windows[k])] = matrix_json(enc.attention[v][k]);
          }
          dump[enc.video_ids[v]] = std::move(per);
        }
        write_text(eval_dump, dump.dump(1) + "\n");
        std::cout << "wrote attention weights to " << eval_dump << '\n';
      }
      if (!eval_report.empty()) {
        const std::string h = config_hash(ck.config);
        append_jsonl(eval_report, run_record(make_run_id("eval", h), h, "eval", to_json(metrics), extra));
      }
      return 0;
    }

    if (*ablate_cmd) {
      const AblationGrid grid = load_ablation_grid(ablate_grid);
      std::cout << grid.cells.size() << " cells x " << grid.seeds.size() << " seeds\n";
      const AblationReport report = run_ablation(grid, [](const AblationRow& r) {
        std::cout << r.cell << " seed " << r.seed << ": "
                  << (r.t2v ? "SumR " + format_fixed(r.t2v->sumr, 1) : r.note) << '\n';
      });
      const std::string table = report.text_table();
      std::cout << table;
      if (!ablate_table.empty()) write_text(ablate_table, table);
      if (!ablate_report.empty()) {
        const std::string run_id = make_run_id("ablate", config_hash(grid.base));
        for (const auto& rec : report.records(run_id)) append_jsonl(ablate_report, rec);
      }
      return 0;
    }

    if (*annot_cmd) {
      Config cfg = annot_config.empty() ? desk_profile() : load_config(annot_config);
      const Corpus corpus = corpus_for(cfg, annot_data);
      const CorpusSplit& split = corpus.split(annot_split);
      const V2VAnnotation ann = build_v2v_annotations(split, token_jaccard, annot_threshold);
      std::size_t pairs = 0;
      for (Eigen::Index i = 0; i < ann.relevant.rows(); ++i) pairs += static_cast<std::size_t>(ann.relevant.row(i).count());
      std::cout << ann.video_ids.size() << " videos, " << ann.queries.size() << " queries with a relevant video, "
                << pairs << " relevant ordered pairs (threshold " << annot_threshold << ", " << ann.sentence_sim
                << ")\n";
      if (!annot_out.empty()) {
        json relevant = json::object();
        for (std::size_t q : ann.queries) {
          json list = json::array();
          for (Eigen::Index c = 0; c < ann.relevant.cols(); ++c) {
            if (ann.relevant(static_cast<Eigen::Index>(q), c)) list.push_back(ann.video_ids[static_cast<std::size_t>(c)]);
          }
          relevant[ann.video_ids[q]] = std::move(list);
        }
        const json out = {{"threshold", ann.threshold}, {"sentence_sim", ann.sentence_sim},
                          {"video_ids", ann.video_ids}, {"similarity", matrix_json(ann.similarity)},
                          {"relevant", relevant}};
        write_text(annot_out, out.dump(1) + "\n");
      }
      return 0;
    }

    if (*stats_cmd) {
      Config cfg;
      if (!stats_profile.empty()) {
        if (stats_profile == "paper") {
          cfg = paper_profile();
        } else if (stats_profile == "desk") {
          cfg = desk_profile();
        } else {
          throw ConfigError("unknown profile " + stats_profile);
        }
        json overrides = json::object();
        for (const auto& s : stats_sets) {
          const auto eq = s.find('=');
          if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + s);
          overrides[s.substr(0, eq)] = parse_set_value(s.substr(eq + 1));
        }
        apply_overrides(cfg, overrides);
        validate(cfg);
      } else {
        cfg = config_with_overrides(stats_config, stats_sets);
      }
      std::unique_ptr<Model> model;
      if (stats_vocab > 0) {
        if (static_cast<std::size_t>(stats_vocab) < static_cast<std::size_t>(cfg.hybrid.k_concepts)) {
          throw ConfigError("--vocab must be at least hybrid.k_concepts");
        }
        std::vector<std::string> words;
        for (int i = 0; i < stats_vocab; ++i) words.push_back("w" + std::to_string(i));
        std::vector<std::string> concepts(words.begin(), words.begin() + cfg.hybrid.k_concepts);
        model = std::make_unique<Model>(cfg, Vocabulary(std::move(words), cfg.text.min_count),
                                        ConceptVocabulary(std::move(concepts)), cfg.train.seed);
      } else {
        const Corpus corpus = corpus_from_config(cfg);
        model = build_model(cfg, corpus.train, cfg.train.seed);
      }
      const ModelStats st = model_stats(*model, stats_frames, stats_words);
      std::vector<std::vector<std::string>> rows;
      for (const auto& [name, n] : st.groups) rows.push_back({name, std::to_string(n)});
      rows.push_back({"total", std::to_string(st.parameters)});
      std::cout << format_table({"Group", "Parameters"}, rows) << '\n';
      rows.clear();
      for (const auto& [name, n] : st.mac_breakdown) rows.push_back({name, std::to_string(n)});
      rows.push_back({"total", std::to_string(st.macs)});
      std::cout << format_table({"Stage", "MACs"}, rows);
      std::cout << "vocabulary " << model->vocabulary().size() << ", " << st.frames << " frames, " << st.words
                << " words\n";
      return 0;
    }

    if (*synth_cmd) {
      const Config cfg = config_with_overrides(synth_config, synth_sets);
      SyntheticSpec spec = cfg.data.synth;
      spec.d_frame = static_cast<std::size_t>(cfg.d_frame);
      const Corpus corpus = make_synthetic_corpus(spec).corpus;
      write_corpus_dir(synth_out, corpus);
      std::cout << "wrote " << corpus.train.videos().size() << "/" << corpus.val.videos().size() << "/"
                << corpus.test.videos().size() << " videos to " << synth_out << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
