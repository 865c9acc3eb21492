#include "vidret/ablation.hpp"
#include "vidret/checkpoint.hpp"
#include "vidret/evaluator.hpp"
#include "vidret/report.hpp"
#include "vidret/stats.hpp"
#include "vidret/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using nlohmann::json;
using namespace vidret;

namespace {

// Configs and reports cross the boundary as JSON text; the Python side wraps
// them with json.loads / json.dumps.
Config config_of(const std::string& text) { return text.empty() ? desk_profile() : config_from_json(json::parse(text)); }

RowVec as_row(const Var& v) { return v.value().row(0); }

class Session {
 public:
  explicit Session(const std::string& config_json, std::optional<std::uint64_t> seed)
      : config_(config_of(config_json)), corpus_(corpus_from_config(config_)) {
    validate(config_);
    model_ = build_model(config_, corpus_.train, seed.value_or(config_.train.seed));
  }

  static std::unique_ptr<Session> from_checkpoint(const std::filesystem::path& path, const std::string& data_dir) {
    const Checkpoint ck = load_checkpoint(path);
    auto s = std::unique_ptr<Session>(new Session());
    s->config_ = ck.config;
    if (!data_dir.empty()) s->config_.data.dir = data_dir;
    s->corpus_ = corpus_from_config(s->config_);
    s->model_ = model_from_checkpoint(ck);
    return s;
  }

  std::string config_json() const { return config_to_json(config_).dump(); }
  std::string hash() const { return config_hash(config_); }
  std::size_t parameter_count() const { return model_->params().scalar_count(); }

  std::string train(const std::filesystem::path& out_dir, bool restore_best) {
    TrainOptions opts;
    opts.out_dir = out_dir;
    opts.restore_best = restore_best;
    py::gil_scoped_release release;
    return to_json(vidret::train(*model_, corpus_, opts).log).dump();
  }

  std::string evaluate(const std::string& split) const {
    return to_json(evaluate_t2v(*model_, corpus_.split(split))).dump();
  }

  std::string evaluate_v2v(const std::string& split, const std::string& branch, const std::string& space,
                           double threshold) const {
    const CorpusSplit& s = corpus_.split(split);
    const V2VAnnotation ann = build_v2v_annotations(s, token_jaccard, threshold);
    const SimilarityMatrix sims =
        similarity_matrix(*model_, s, Direction::VideoToVideo, parse_branch_sel(branch), parse_feature_space(space));
    return to_json(vidret::evaluate_v2v(sims, ann)).dump();
  }

  py::tuple similarity(const std::string& split, const std::string& direction, const std::string& branch,
                       const std::string& space) const {
    const SimilarityMatrix m = similarity_matrix(*model_, corpus_.split(split), parse_direction(direction),
                                                 parse_branch_sel(branch), parse_feature_space(space));
    return py::make_tuple(m.scores, m.query_ids, m.candidate_ids);
  }

  py::dict encode_video(const Mat& frames) const {
    Tape tape(false);
    const Model::VideoEncoding e = model_->encode_video(tape, {"query", frames}, true);
    py::dict out;
    if (e.p.valid()) out["p"] = as_row(e.p);
    if (e.g.valid()) out["g"] = as_row(e.g);
    out["attention"] = e.attention;
    return out;
  }

  RowVec encode_text(const std::string& text) const {
    Caption c;
    c.sentence_id = "query";
    c.tokens = tokenize(text);
    Tape tape(false);
    return as_row(model_->encode_text(tape, c));
  }

  py::dict gradient_check(std::size_t pairs, double eps) {
    const GradCheckReport r =
        vidret::gradient_check(model_->params(), batch_loss_fn(*model_, corpus_.train, pairs), eps);
    py::dict out;
    out["max_rel"] = r.max_rel;
    out["mean_rel"] = r.mean_rel;
    out["coords"] = r.coords;
    return out;
  }

  py::dict stats(int frames, int words) const {
    const ModelStats s = model_stats(*model_, frames, words);
    py::dict out;
    out["parameters"] = s.parameters;
    out["macs"] = s.macs;
    out["groups"] = s.groups;
    return out;
  }

  void save(const std::filesystem::path& path, bool f32) const {
    save_checkpoint(path, *model_, nullptr, TrainingState{}, f32 ? Precision::F32 : Precision::F64);
  }

 private:
  Session() = default;
  Config config_;
  Corpus corpus_;
  std::unique_ptr<Model> model_;
};

}  // namespace

PYBIND11_MODULE(_vidret, m) {
  m.doc() = "Two-branch video representation for text-to-video retrieval";

  py::register_exception<Error>(m, "VidretError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<LoadError>(m, "LoadError", PyExc_IOError);

  m.def("desk_config", [] { return config_to_json(desk_profile()).dump(); });
  m.def("paper_config", [] { return config_to_json(paper_profile()).dump(); });
  m.def("normalize_config", [](const std::string& j) { return config_to_json(config_of(j)).dump(); });
  m.def("config_hash", [](const std::string& j) { return config_hash(config_of(j)); });

  m.def("read_features", [](const std::filesystem::path& p) {
    std::vector<std::pair<std::string, Mat>> out;
    for (auto& v : load_frame_features(p)) out.emplace_back(v.video_id, std::move(v.frames));
    return out;
  });
  m.def("write_features", [](const std::filesystem::path& p, const std::vector<std::pair<std::string, Mat>>& vids) {
    std::vector<FrameFeatureSequence> seqs;
    for (const auto& [id, frames] : vids) seqs.push_back({id, frames});
    write_frame_features(p, seqs);
  });
  m.def("read_captions", [](const std::filesystem::path& p) {
    std::vector<std::tuple<std::string, std::string, std::vector<std::string>>> out;
    for (const auto& c : load_captions(p)) out.emplace_back(c.sentence_id, c.video_id, c.tokens);
    return out;
  });
  m.def("tokenize", [](const std::string& s) { return tokenize(s); });

  m.def("cosine_sim", [](const RowVec& a, const RowVec& b) { return cosine_sim(a, b); });
  m.def("jaccard_sim", [](const RowVec& a, const RowVec& b) { return jaccard_sim(a, b); });
  m.def(
      "triplet_loss", [](const Mat& s, double margin) { return triplet_loss(s, margin); }, py::arg("sims"),
      py::arg("margin") = 0.2);
  m.def(
      "rank_metrics",
      [](const Mat& scores, const std::vector<std::vector<std::size_t>>& relevant) {
        std::vector<QueryTruth> truth;
        for (const auto& r : relevant) truth.push_back({r, std::nullopt});
        return to_json(rank_metrics(scores, truth)).dump();
      },
      py::arg("scores"), py::arg("relevant"));

  py::class_<Session>(m, "Session")
      .def(py::init<const std::string&, std::optional<std::uint64_t>>(), py::arg("config_json") = "",
           py::arg("seed") = py::none())
      .def_static("from_checkpoint", &Session::from_checkpoint, py::arg("path"), py::arg("data_dir") = "")
      .def("config_json", &Session::config_json)
      .def("config_hash", &Session::hash)
      .def_property_readonly("parameter_count", &Session::parameter_count)
      .def("train", &Session::train, py::arg("out_dir") = "", py::arg("restore_best") = true)
      .def("evaluate", &Session::evaluate, py::arg("split") = "test")
      .def("evaluate_v2v", &Session::evaluate_v2v, py::arg("split") = "test", py::arg("branch") = "both",
           py::arg("space") = "raw", py::arg("threshold") = 0.2)
      .def("similarity", &Session::similarity, py::arg("split") = "test", py::arg("direction") = "t2v",
           py::arg("branch") = "both", py::arg("space") = "raw")
      .def("encode_video", &Session::encode_video, py::arg("frames"))
      .def("encode_text", &Session::encode_text, py::arg("text"))
      .def("gradient_check", &Session::gradient_check, py::arg("pairs") = 3, py::arg("eps") = 1e-5)
      .def("stats", &Session::stats, py::arg("frames") = 20, py::arg("words") = 10)
      .def("save", &Session::save, py::arg("path"), py::arg("f32") = false);
}
