#include "depthbins/bins_decoder.hpp"

#include <string>

namespace depthbins {

void DecoderConfig::validate() const {
  if (num_queries < 1) throw std::invalid_argument("num_queries must be at least 1");
  if (layers_per_scale < 1) throw std::invalid_argument("layers_per_scale must be at least 1");
  if (scales_used.empty()) throw std::invalid_argument("scales_used must not be empty");
  for (int s : scales_used) {
    if (s < 1 || s > 4) throw std::invalid_argument("scales_used entries must be pyramid levels 1..4");
  }
  if (num_heads < 1) throw std::invalid_argument("num_heads must be positive");
  if (ffn_mult < 1) throw std::invalid_argument("ffn_mult must be positive");
  if (scene_classes == 1 || scene_classes < 0) throw std::invalid_argument("scene_classes must be 0 or >= 2");
}

QuerySet init_queries(int num_bins, int query_dim, std::uint64_t seed, double stddev) {
  if (num_bins < 1) throw std::invalid_argument("init_queries: N must be at least 1");
  if (query_dim < 1) throw std::invalid_argument("init_queries: query dimension must be positive");
  QuerySet q;
  q.num_bins = num_bins;
  q.content = Tensor({num_bins + 1, query_dim});
  q.positional = Tensor({num_bins + 1, query_dim});
  Rng rng(seed);
  init_normal(q.positional, stddev, rng);
  return q;
}

BinsDecoder::BinsDecoder(ParameterStore& store, const DecoderConfig& cfg, int d_model, int pixel_channels,
                         std::uint64_t seed, Rng& rng)
    : cfg_(cfg), d_model_(d_model) {
  cfg_.validate();
  if (d_model % cfg_.num_heads != 0) throw std::invalid_argument("d_model must be divisible by num_heads");
  const int n = cfg_.num_queries;

  query_pos_ = &store.create("decoder.query_pos", {n + 1, d_model}, false);
  query_pos_->value = init_queries(n, d_model, seed, cfg_.query_pos_std).positional;

  const int total = cfg_.num_scales() * cfg_.layers_per_scale;
  for (int i = 0; i < total; ++i) {
    const std::string name = "decoder.layer" + std::to_string(i);
    Layer l;
    l.cross_norm = LayerNorm::create(store, name + ".cross_norm", d_model);
    l.self_norm = LayerNorm::create(store, name + ".self_norm", d_model);
    l.ffn_norm = LayerNorm::create(store, name + ".ffn_norm", d_model);
    for (auto [att, tag] : {std::pair<Attention*, const char*>{&l.cross, "cross"}, {&l.self, "self"}}) {
      const std::string an = name + "." + tag;
      att->q = Linear::create(store, an + ".q", d_model, d_model, true, rng);
      att->k = Linear::create(store, an + ".k", d_model, d_model, true, rng);
      att->v = Linear::create(store, an + ".v", d_model, d_model, true, rng);
      att->out = Linear::create(store, an + ".out", d_model, d_model, true, rng);
    }
    l.ffn1 = Linear::create(store, name + ".ffn1", d_model, d_model * cfg_.ffn_mult, true, rng);
    l.ffn2 = Linear::create(store, name + ".ffn2", d_model * cfg_.ffn_mult, d_model, true, rng);
    layers_.push_back(l);
  }
  out_norm_ = LayerNorm::create(store, "decoder.out_norm", d_model);
  length_head_ = Linear::create(store, "heads.bin_length", d_model, 1, true, rng);
  embed_head_ = Mlp3::create(store, "heads.bin_embedding", d_model, d_model, pixel_channels, rng);
  if (cfg_.scene_classes > 0) {
    scene_head_ = Mlp3::create(store, "heads.scene", d_model, d_model, cfg_.scene_classes, rng);
  }
  if (cfg_.isolate_scene_query) {
    self_mask_.assign(static_cast<std::size_t>(n + 1) * (n + 1), 0);
    for (int i = 1; i <= n; ++i) self_mask_[static_cast<std::size_t>(i) * (n + 1)] = 1;
  }
}

Var BinsDecoder::initial_queries() const { return constant(Tensor({cfg_.num_queries + 1, d_model_})); }

Var BinsDecoder::query_positions(Graph& g) const { return g.param(*query_pos_); }

Var BinsDecoder::attend(Graph& g, const Attention& a, const Var& query_in, const Var& key_in, const Var& value_in,
                        const std::vector<std::uint8_t>& blocked, Tensor* weights) const {
  Var q = a.q(g, query_in);
  Var k = a.k(g, key_in);
  Var v = a.v(g, value_in);
  return a.out(g, ops::attention(q, k, v, cfg_.num_heads, blocked, weights));
}

Var BinsDecoder::decode_layer(Graph& g, int layer_index, const Var& queries, const Var& query_pos, const Var& tokens,
                              Tensor* attention_out) const {
  require_shape(queries->value.cols() == d_model_ && tokens->value.cols() == d_model_,
                "decode_layer: query width " + std::to_string(queries->value.cols()) + " / token width " +
                    std::to_string(tokens->value.cols()) + " != d_model " + std::to_string(d_model_));
  require_shape(queries->value.rows() == cfg_.num_queries + 1, "decode_layer: expected N+1 queries");
  const Layer& l = layers_.at(static_cast<std::size_t>(layer_index));

  Var h = l.cross_norm(g, queries);
  Var x = ops::add(queries, attend(g, l.cross, ops::add(h, query_pos), tokens, tokens, {}, attention_out));

  h = l.self_norm(g, x);
  Var qk = ops::add(h, query_pos);
  x = ops::add(x, attend(g, l.self, qk, qk, h, self_mask_, nullptr));

  h = l.ffn_norm(g, x);
  return ops::add(x, l.ffn2(g, ops::relu(l.ffn1(g, h))));
}

Var BinsDecoder::bins_length_head(Graph& g, const Var& bins_states) const {
  const int n = bins_states->value.rows();
  Var logits = ops::reshape(length_head_(g, bins_states), {1, n});
  return ops::reshape(ops::softmax_rows(logits), {n});
}

Var BinsDecoder::bins_embedding_head(Graph& g, const Var& bins_states) const { return embed_head_(g, bins_states); }

Var BinsDecoder::scene_head(Graph& g, const Var& scene_state) const {
  if (!has_scene_head()) throw SceneHeadMissing();
  return ops::reshape(scene_head_(g, scene_state), {cfg_.scene_classes});
}

DecoderTrace BinsDecoder::run(Graph& g, const std::vector<Var>& scale_tokens, bool capture_attention) const {
  const bool capture = capture_attention || cfg_.capture_attention;
  if (scale_tokens.empty()) throw std::invalid_argument("run_decoder: no token scales given");
  require_shape(static_cast<int>(scale_tokens.size()) == cfg_.num_scales(),
                "run_decoder: number of token scales does not match scales_used");
  DecoderTrace trace;
  Var x = initial_queries();
  Var pos = query_positions(g);
  const int n = cfg_.num_queries;
  int index = 0;
  for (int s = 0; s < cfg_.num_scales(); ++s) {
    for (int l = 0; l < cfg_.layers_per_scale; ++l, ++index) {
      Tensor att;
      x = decode_layer(g, index, x, pos, scale_tokens[s], capture ? &att : nullptr);
      Var q = out_norm_(g, x);
      Var bins_q = ops::slice_rows(q, 1, n + 1);
      BinsPrediction pred;
      pred.bin_lengths = bins_length_head(g, bins_q);
      pred.bin_embeddings = bins_embedding_head(g, bins_q);
      if (has_scene_head()) pred.scene_logits = scene_head(g, ops::slice_rows(q, 0, 1));
      trace.per_layer.push_back(std::move(pred));
      trace.layer_level.push_back(cfg_.scales_used[s]);
      if (capture) trace.attention.push_back(std::move(att));
    }
  }
  return trace;
}

}  // namespace depthbins
