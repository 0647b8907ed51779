#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "depthbins/layers.hpp"

namespace depthbins {

struct DecoderConfig {
  int num_queries = 64;                 ///< N bins queries (the scene query is extra)
  int layers_per_scale = 3;             ///< L
  std::vector<int> scales_used{4, 3, 2};  ///< pyramid levels, coarse to fine
  int num_heads = 4;
  int ffn_mult = 4;
  int scene_classes = 4;                ///< K; 0 removes the scene head
  bool capture_attention = false;
  double query_pos_std = 0.02;
  /// Blocks bins queries from attending to the scene query in self-attention.
  bool isolate_scene_query = false;

  int num_scales() const { return static_cast<int>(scales_used.size()); }
  void validate() const;
};

class SceneHeadMissing : public std::logic_error {
 public:
  SceneHeadMissing() : std::logic_error("scene head requested but the model has no scene classes configured") {}
};

/// Row 0 is the scene query; rows 1..N are bins queries.
struct QuerySet {
  Tensor content;     ///< {N+1, C_q}, zero
  Tensor positional;  ///< {N+1, C_q}
  int num_bins = 0;
};

QuerySet init_queries(int num_bins, int query_dim, std::uint64_t seed, double stddev = 0.02);

struct BinsPrediction {
  Var bin_lengths;     ///< {N}, on the simplex
  Var bin_embeddings;  ///< {N, C}: row i is the embedding of bin i
  Var scene_logits;    ///< {K}; null without a scene head
};

struct DecoderTrace {
  std::vector<BinsPrediction> per_layer;  ///< S*L entries, scale-major
  std::vector<int> layer_level;           ///< pyramid level each entry attended to
  std::vector<Tensor> attention;          ///< cross-attention {heads, N+1, tokens} per entry, if captured
};

class BinsDecoder {
 public:
  BinsDecoder(ParameterStore& store, const DecoderConfig& cfg, int d_model, int pixel_channels, std::uint64_t seed,
              Rng& rng);

  /// Zero content queries as a graph constant.
  Var initial_queries() const;
  Var query_positions(Graph& g) const;

  /// One layer: cross-attention to `tokens`, then self-attention, then FFN,
  /// all pre-norm with residuals. Returns the updated {N+1, d} states.
  Var decode_layer(Graph& g, int layer_index, const Var& queries, const Var& query_pos, const Var& tokens,
                   Tensor* attention_out = nullptr) const;

  /// Runs L layers against each scale in order and applies the heads after
  /// every layer.
  /// `capture_attention` records cross-attention even when the config does not.
  DecoderTrace run(Graph& g, const std::vector<Var>& scale_tokens, bool capture_attention = false) const;

  Var bins_length_head(Graph& g, const Var& bins_states) const;
  Var bins_embedding_head(Graph& g, const Var& bins_states) const;
  Var scene_head(Graph& g, const Var& scene_state) const;
  bool has_scene_head() const { return cfg_.scene_classes > 0; }

  const DecoderConfig& config() const { return cfg_; }
  int total_layers() const { return static_cast<int>(layers_.size()); }

  struct Attention {
    Linear q, k, v, out;
  };
  struct Layer {
    LayerNorm cross_norm, self_norm, ffn_norm;
    Attention cross, self;
    Linear ffn1, ffn2;
  };
  /// Exposed for tests that zero individual branches.
  const Layer& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }

 private:
  Var attend(Graph& g, const Attention& a, const Var& query_in, const Var& key_in, const Var& value_in,
             const std::vector<std::uint8_t>& blocked, Tensor* weights) const;

  DecoderConfig cfg_;
  int d_model_;
  Parameter* query_pos_ = nullptr;
  std::vector<Layer> layers_;
  LayerNorm out_norm_;
  Linear length_head_;
  Mlp3 embed_head_;
  Mlp3 scene_head_;
  std::vector<std::uint8_t> self_mask_;
};

}  // namespace depthbins
