#pragma once

// Binary checkpoint container:
//
//   "VRCK" u32 version
//   str config_json
//   u32 min_count, u32 n_words, str words...      (vocabulary, <unk> omitted)
//   u32 n_concepts, str concepts...
//   u32 n_tensors, { str name, u32 rows, u32 cols, u8 bits (64|32), LE floats row-major }
//   u8 has_optimizer, { u64 step, f64 beta1, f64 beta2, f64 eps, u32 n, { str name, tensor m, tensor v } }
//   training state: u32 epoch, f64 lr, f64 best, u32 best_epoch, u32 since_improve, u32 since_lr, str rng
//
// where str = u32 length + bytes and a tensor inside the optimizer block is
// u32 rows, u32 cols, u8 bits, data.

#include "vidret/trainer.hpp"

namespace vidret {

enum class Precision { F64, F32 };

struct NamedTensor {
  std::string name;
  Mat value;
};

struct Checkpoint {
  Config config;
  Vocabulary vocabulary;
  ConceptVocabulary concepts;
  std::vector<NamedTensor> tensors;
  std::optional<OptimizerState> optimizer;
  TrainingState state;
};

std::string serialize_checkpoint(const Model& model, const OptimizerState* optimizer, const TrainingState& state,
                                 Precision precision = Precision::F64);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimizerState* optimizer,
                     const TrainingState& state, Precision precision = Precision::F64);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies tensors into the model by name; every model parameter must be present
/// with the same shape.
void load_parameters(Model& model, const Checkpoint& ckpt);
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace vidret
