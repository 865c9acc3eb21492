#include "vidret/stats.hpp"

#include <map>

namespace vidret {
namespace {

using u64 = std::uint64_t;

u64 gru_macs(u64 steps, u64 in, u64 hidden) { return steps * (3 * hidden * in + 3 * hidden * hidden); }

u64 conv_positions(u64 length, u64 window, u64 stride) {
  return (std::max(length, window) - window) / stride + 1;
}

std::string group_of(const std::string& name) {
  const auto dot = name.find('.');
  const std::string head = name.substr(0, dot);
  if (head == "hybrid" && dot != std::string::npos) {
    const auto next = name.find('.', dot + 1);
    return name.substr(0, next);
  }
  return head;
}

}  // namespace

ModelStats model_stats(const Model& model, int frames, int words) {
  if (frames < 1 || words < 1) throw Error("model_stats: frames and words must be positive");
  const Config& c = model.config();
  ModelStats s;
  s.frames = frames;
  s.words = words;

  std::map<std::string, std::size_t> groups;
  std::vector<std::string> order;
  for (const auto& p : model.params().all()) {
    if (!p->trainable) continue;
    s.parameters += p->size();
    const std::string g = group_of(p->name);
    if (groups.emplace(g, 0).second) order.push_back(g);
    groups[g] += p->size();
  }
  for (const auto& g : order) s.groups.emplace_back(g, groups[g]);

  const u64 m = static_cast<u64>(frames);
  const u64 len = static_cast<u64>(words);
  const u64 d_frame = static_cast<u64>(c.d_frame);
  auto add = [&](const std::string& what, u64 macs) {
    s.mac_breakdown.emplace_back(what, macs);
    s.macs += macs;
  };

  // text
  const u64 h_t = static_cast<u64>(c.text.h_text);
  u64 text = 2 * gru_macs(len, static_cast<u64>(c.text.d_word), h_t);
  for (int w : c.text.windows) {
    text += conv_positions(len, static_cast<u64>(w), 1) * static_cast<u64>(w) * 2 * h_t *
            static_cast<u64>(c.text.r_text);
  }
  add("text", text);

  const u64 d_p = static_cast<u64>(c.preview.output_dim());
  if (model.has_preview_branch()) {
    const u64 h = static_cast<u64>(c.preview.hidden);
    add("preview", c.preview.kind == PreviewKind::BiGru ? 2 * gru_macs(m, d_frame, h) : m * d_frame * 2 * h);
  }

  if (model.has_intensive_branch()) {
    const IntensiveConfig& ic = c.intensive;
    const u64 d_map = static_cast<u64>(ic.d_map), r = static_cast<u64>(ic.filters);
    const u64 d_k = static_cast<u64>(ic.d_k), d_v = static_cast<u64>(ic.d_v), d_ff = static_cast<u64>(ic.d_ff());
    u64 intensive = m * d_frame * d_map;
    for (int n : model.intensive_params().windows) {
      const u64 mn = conv_positions(m, static_cast<u64>(n), static_cast<u64>(ic.stride));
      intensive += mn * static_cast<u64>(n) * d_map * r;
      u64 pool = mn * r * d_v;  // values
      switch (ic.variant) {
        case AttentionVariant::Paa:
          pool += d_p * d_k + mn * r * d_k + mn * d_k + mn * d_v;
          break;
        case AttentionVariant::Mean:
          break;
        case AttentionVariant::Simple:
          pool += mn * (d_p + r) + mn * d_v;
          break;
        case AttentionVariant::ConcatSa:
        case AttentionVariant::SumSa: {
          const u64 fuse = ic.variant == AttentionVariant::ConcatSa ? mn * (d_p + r) * r : d_p * r;
          pool += fuse + 2 * mn * r * d_k + mn * mn * d_k + mn * mn * d_v;
          break;
        }
      }
      intensive += pool + d_v * d_v + 2 * d_v * d_ff;
    }
    add("intensive", intensive);
  }

  const u64 d_lat = static_cast<u64>(c.hybrid.d_lat), k = static_cast<u64>(c.hybrid.k_concepts);
  const u64 d_text = static_cast<u64>(model.text_dim());
  if (model.preview_space() != nullptr) add("hybrid.preview", (d_p + d_text) * (d_lat + k) + d_lat + k);
  if (model.intensive_space() != nullptr) {
    add("hybrid.intensive", (static_cast<u64>(model.intensive_dim()) + d_text) * (d_lat + k) + d_lat + k);
  }
  return s;
}

}  // namespace vidret
