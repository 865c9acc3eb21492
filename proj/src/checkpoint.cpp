#include "vidret/checkpoint.hpp"

#include "binio.hpp"

#include <cstring>

namespace vidret {
namespace {

constexpr char kMagic[4] = {'V', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_tensor_data(std::string& out, const Mat& m, Precision precision) {
  binio::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  binio::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  binio::put_u8(out, precision == Precision::F64 ? 64 : 32);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (precision == Precision::F64) {
        binio::put_f64(out, m(r, c));
      } else {
        binio::put_f32(out, static_cast<float>(m(r, c)));
      }
    }
  }
}

Mat read_tensor_data(binio::Reader& in) {
  const std::uint32_t rows = in.u32();
  const std::uint32_t cols = in.u32();
  const std::uint8_t bits = in.u8();
  if (bits != 64 && bits != 32) throw Error("checkpoint tensor has unsupported precision flag " + std::to_string(bits));
  in.need(static_cast<std::size_t>(rows) * cols * (bits / 8));
  Mat m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = bits == 64 ? in.f64() : static_cast<double>(in.f32());
  }
  return m;
}

}  // namespace

std::string serialize_checkpoint(const Model& model, const OptimizerState* optimizer, const TrainingState& state,
                                 Precision precision) {
  std::string out(kMagic, 4);
  binio::put_u32(out, kVersion);
  binio::put_str(out, config_to_json(model.config()).dump());

  const auto& words = model.vocabulary().words();
  binio::put_u32(out, static_cast<std::uint32_t>(model.vocabulary().min_count()));
  binio::put_u32(out, static_cast<std::uint32_t>(words.size() - 1));
  for (std::size_t i = 1; i < words.size(); ++i) binio::put_str(out, words[i]);
  const auto& concepts = model.concepts().concepts();
  binio::put_u32(out, static_cast<std::uint32_t>(concepts.size()));
  for (const auto& c : concepts) binio::put_str(out, c);

  const auto& params = model.params().all();
  binio::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    binio::put_str(out, p->name);
    put_tensor_data(out, p->value, precision);
  }

  binio::put_u8(out, optimizer != nullptr ? 1 : 0);
  if (optimizer != nullptr) {
    binio::put_u64(out, optimizer->step);
    binio::put_f64(out, optimizer->beta1);
    binio::put_f64(out, optimizer->beta2);
    binio::put_f64(out, optimizer->eps);
    binio::put_u32(out, static_cast<std::uint32_t>(optimizer->names.size()));
    for (std::size_t i = 0; i < optimizer->names.size(); ++i) {
      binio::put_str(out, optimizer->names[i]);
      put_tensor_data(out, optimizer->m[i], Precision::F64);
      put_tensor_data(out, optimizer->v[i], Precision::F64);
    }
  }

  binio::put_u32(out, static_cast<std::uint32_t>(state.epoch));
  binio::put_f64(out, state.lr);
  binio::put_f64(out, state.best_objective);
  binio::put_u32(out, static_cast<std::uint32_t>(state.best_epoch));
  binio::put_u32(out, static_cast<std::uint32_t>(state.since_improve));
  binio::put_u32(out, static_cast<std::uint32_t>(state.since_lr));
  binio::put_str(out, state.rng_state);
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  binio::Reader in(bytes, "checkpoint");
  if (!in.has(8) || std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error("not a checkpoint file (bad magic)");
  in.raw(4);
  const std::uint32_t version = in.u32();
  if (version != kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  try {
    ck.config = config_from_json(nlohmann::json::parse(in.str()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint config is not valid JSON: ") + e.what());
  }

  const auto min_count = static_cast<int>(in.u32());
  std::vector<std::string> words(in.u32());
  for (auto& w : words) w = in.str();
  ck.vocabulary = Vocabulary(std::move(words), min_count);
  std::vector<std::string> concepts(in.u32());
  for (auto& c : concepts) c = in.str();
  ck.concepts = ConceptVocabulary(std::move(concepts));

  ck.tensors.resize(in.u32());
  for (auto& t : ck.tensors) {
    t.name = in.str();
    t.value = read_tensor_data(in);
  }

  if (in.u8() != 0) {
    OptimizerState opt;
    opt.step = in.u64();
    opt.beta1 = in.f64();
    opt.beta2 = in.f64();
    opt.eps = in.f64();
    const std::uint32_t n = in.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      opt.names.push_back(in.str());
      opt.m.push_back(read_tensor_data(in));
      opt.v.push_back(read_tensor_data(in));
    }
    ck.optimizer = std::move(opt);
  }

  ck.state.epoch = static_cast<int>(in.u32());
  ck.state.lr = in.f64();
  ck.state.best_objective = in.f64();
  ck.state.best_epoch = static_cast<int>(in.u32());
  ck.state.since_improve = static_cast<int>(in.u32());
  ck.state.since_lr = static_cast<int>(in.u32());
  ck.state.rng_state = in.str();
  if (!in.at_end()) throw Error("trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimizerState* optimizer,
                     const TrainingState& state, Precision precision) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  binio::write_file(tmp, serialize_checkpoint(model, optimizer, state, precision));
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(binio::read_file(path)); }

void load_parameters(Model& model, const Checkpoint& ckpt) {
  std::unordered_map<std::string, const Mat*> by_name;
  for (const auto& t : ckpt.tensors) by_name.emplace(t.name, &t.value);
  for (const auto& p : model.params().all()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw Error("checkpoint is missing parameter " + p->name);
    const Mat& v = *it->second;
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      throw Error("checkpoint parameter " + p->name + " has shape " + std::to_string(v.rows()) + "x" +
                  std::to_string(v.cols()) + ", model expects " + std::to_string(p->value.rows()) + "x" +
                  std::to_string(p->value.cols()));
    }
    p->value = v;
  }
  if (by_name.size() != model.params().all().size()) throw Error("checkpoint has parameters the model does not");
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<Model>(ckpt.config, ckpt.vocabulary, ckpt.concepts, ckpt.config.train.seed);
  load_parameters(*model, ckpt);
  return model;
}

}  // namespace vidret
