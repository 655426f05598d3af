#pragma once

#include <vector>

#include "ssit/ops.hpp"
#include "ssit/params.hpp"

namespace ssit {

struct ArchConfig {
  int image_size = 256;
  int disc_scales = 0;  // 0 = derive from image_size
  int style_dim = 8;
  int base_channels = 64;

  static int default_scales(int image_size);
  int resolved_scales() const { return disc_scales > 0 ? disc_scales : default_scales(image_size); }
  int content_channels() const { return 4 * base_channels; }
};

// Per-graph cache of parameter leaves. Value/grad buffers are shared with the
// store, so a backward pass accumulates straight into Param::grad. The two
// sides of the adversarial objective are made trainable independently; a
// non-trainable binding contributes values but never receives gradients.
class ParamBinding {
 public:
  ParamBinding(Graph& g, ParamStore& store, bool train_generator,
               bool train_discriminator)
      : graph_(&g),
        store_(&store),
        bound_(store.size()),
        train_gen_(train_generator),
        train_disc_(train_discriminator) {}

  Tensor get(size_t idx);
  Graph& graph() { return *graph_; }

 private:
  Graph* graph_;
  ParamStore* store_;
  std::vector<Tensor> bound_;
  bool train_gen_, train_disc_;
};

// The two auto-encoders (content encoder, style encoder, decoder with an
// AdaIN-parameter MLP) and the two multi-scale discriminators. Parameter
// names are stable and form the checkpoint schema.
class Networks {
 public:
  Networks(ArchConfig cfg, uint64_t seed);  // deterministic scaled-Gaussian init
  explicit Networks(ArchConfig cfg);        // zero parameters (for checkpoint load)

  const ArchConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const std::vector<size_t>& generator_param_ids() const { return gen_ids_; }
  const std::vector<size_t>& discriminator_param_ids() const { return disc_ids_; }

  // domain is 1 or 2 throughout
  Tensor content_encode(ParamBinding& pb, int domain, const Tensor& image) const;
  Tensor style_encode(ParamBinding& pb, int domain, const Tensor& image) const;
  Tensor decode(ParamBinding& pb, int domain, const Tensor& content,
                const Tensor& style) const;
  Tensor mlp_adain_params(ParamBinding& pb, int domain, const Tensor& style) const;
  std::vector<Tensor> discriminate(ParamBinding& pb, int domain,
                                   const Tensor& image) const;

  // 4 residual blocks x 2 convs x content channels x (gamma, beta)
  int64_t adain_param_count() const { return 16LL * cfg_.content_channels(); }

 private:
  struct ConvIds { size_t w = 0, b = 0; };
  struct NormIds { size_t gamma = 0, beta = 0; };
  struct ResIds { ConvIds conv0, conv1; NormIds norm0, norm1; };
  struct ContentEncIds { ConvIds down[3]; NormIds norm[3]; ResIds res[4]; };
  struct StyleEncIds { ConvIds conv[5]; ConvIds fc; };
  struct DecoderIds { ResIds res[4]; ConvIds up0, up1, out; ConvIds mlp[3]; };
  struct DiscScaleIds { ConvIds conv[4]; ConvIds head; };
  struct DomainIds {
    ContentEncIds content;
    StyleEncIds style;
    DecoderIds decoder;
    std::vector<DiscScaleIds> disc;
  };

  void register_all();
  void init_weights(uint64_t seed);
  ConvIds add_conv(const std::string& name, int64_t cout, int64_t cin, int64_t k);
  NormIds add_norm(const std::string& name, int64_t channels);
  ConvIds add_fc(const std::string& name, int64_t out, int64_t in);
  const DomainIds& domain(int d) const;

  Tensor conv_block(ParamBinding& pb, const ConvIds& c, const Tensor& x, int stride,
                    int pad, PadMode mode) const;

  ArchConfig cfg_;
  ParamStore store_;
  DomainIds domains_[2];
  std::vector<size_t> gen_ids_, disc_ids_;
};

}  // namespace ssit
