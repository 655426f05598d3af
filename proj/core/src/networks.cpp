#include "ssit/networks.hpp"

#include <cmath>
#include <stdexcept>

#include "ssit/rng.hpp"

namespace ssit {

int ArchConfig::default_scales(int image_size) {
  // 3 scales at 256, 1 at desk-scale 32; every scale input must survive the
  // four stride-2 layers
  int s = 0;
  for (int v = image_size / 16; v > 1 && s < 3; v >>= 1) ++s;
  return std::max(1, s);
}

Tensor ParamBinding::get(size_t idx) {
  if (!bound_[idx].defined()) {
    Param& p = (*store_)[idx];
    const bool trainable = p.discriminator ? train_disc_ : train_gen_;
    bound_[idx] = graph_->leaf_shared(p.shape, p.value, trainable ? p.grad : nullptr,
                                      trainable);
  }
  return bound_[idx];
}

Networks::Networks(ArchConfig cfg) : cfg_(cfg) { register_all(); }

Networks::Networks(ArchConfig cfg, uint64_t seed) : cfg_(cfg) {
  register_all();
  init_weights(seed);
}

Networks::ConvIds Networks::add_conv(const std::string& name, int64_t cout,
                                     int64_t cin, int64_t k) {
  ConvIds ids;
  ids.w = store_.add(name + ".w", {cout, cin, k, k});
  ids.b = store_.add(name + ".b", {cout});
  return ids;
}

Networks::NormIds Networks::add_norm(const std::string& name, int64_t channels) {
  NormIds ids;
  ids.gamma = store_.add(name + ".gamma", {channels});
  ids.beta = store_.add(name + ".beta", {channels});
  return ids;
}

Networks::ConvIds Networks::add_fc(const std::string& name, int64_t out, int64_t in) {
  ConvIds ids;
  ids.w = store_.add(name + ".w", {out, in});
  ids.b = store_.add(name + ".b", {out});
  return ids;
}

void Networks::register_all() {
  const int64_t c1 = cfg_.base_channels;
  const int64_t c2 = 2 * c1, c4 = 4 * c1, c8 = 8 * c1;
  const int scales = cfg_.resolved_scales();

  for (int d = 1; d <= 2; ++d) {
    DomainIds& ids = domains_[d - 1];
    const std::string ec = "e" + std::to_string(d) + "c";
    ids.content.down[0] = add_conv(ec + ".down0", c1, 3, 7);
    ids.content.norm[0] = add_norm(ec + ".norm0", c1);
    ids.content.down[1] = add_conv(ec + ".down1", c2, c1, 4);
    ids.content.norm[1] = add_norm(ec + ".norm1", c2);
    ids.content.down[2] = add_conv(ec + ".down2", c4, c2, 4);
    ids.content.norm[2] = add_norm(ec + ".norm2", c4);
    for (int r = 0; r < 4; ++r) {
      const std::string rb = ec + ".res" + std::to_string(r);
      ids.content.res[r].conv0 = add_conv(rb + ".conv0", c4, c4, 3);
      ids.content.res[r].norm0 = add_norm(rb + ".norm0", c4);
      ids.content.res[r].conv1 = add_conv(rb + ".conv1", c4, c4, 3);
      ids.content.res[r].norm1 = add_norm(rb + ".norm1", c4);
    }

    const std::string es = "e" + std::to_string(d) + "s";
    const int64_t sc[5][2] = {{c1, 3}, {c2, c1}, {c4, c2}, {c4, c4}, {c4, c4}};
    for (int i = 0; i < 5; ++i)
      ids.style.conv[i] =
          add_conv(es + ".conv" + std::to_string(i), sc[i][0], sc[i][1],
                   i == 0 ? 7 : 4);
    ids.style.fc = add_fc(es + ".fc", cfg_.style_dim, c4);

    const std::string gd = "g" + std::to_string(d);
    for (int r = 0; r < 4; ++r) {
      const std::string rb = gd + ".res" + std::to_string(r);
      ids.decoder.res[r].conv0 = add_conv(rb + ".conv0", c4, c4, 3);
      ids.decoder.res[r].conv1 = add_conv(rb + ".conv1", c4, c4, 3);
    }
    ids.decoder.up0 = add_conv(gd + ".up0", c2, c4, 5);
    ids.decoder.up1 = add_conv(gd + ".up1", c1, c2, 5);
    ids.decoder.out = add_conv(gd + ".out", 3, c1, 7);
    ids.decoder.mlp[0] = add_fc(gd + ".mlp0", c4, cfg_.style_dim);
    ids.decoder.mlp[1] = add_fc(gd + ".mlp1", c4, c4);
    ids.decoder.mlp[2] = add_fc(gd + ".mlp2", adain_param_count(), c4);

    const std::string dd = "d" + std::to_string(d);
    ids.disc.resize(scales);
    for (int s = 0; s < scales; ++s) {
      const std::string ds = dd + ".s" + std::to_string(s);
      const int64_t dc[4][2] = {{c1, 3}, {c2, c1}, {c4, c2}, {c8, c4}};
      for (int i = 0; i < 4; ++i)
        ids.disc[s].conv[i] =
            add_conv(ds + ".conv" + std::to_string(i), dc[i][0], dc[i][1], 4);
      ids.disc[s].head = add_conv(ds + ".head", 1, c8, 1);
    }
  }

  for (size_t i = 0; i < store_.size(); ++i) {
    Param& p = store_[i];
    p.discriminator = p.name[0] == 'd';
    (p.discriminator ? disc_ids_ : gen_ids_).push_back(i);
  }
}

void Networks::init_weights(uint64_t seed) {
  for (size_t i = 0; i < store_.size(); ++i) {
    Param& p = store_[i];
    auto& v = *p.value;
    const bool is_weight = p.name.ends_with(".w");
    const bool is_gamma = p.name.ends_with(".gamma");
    if (is_weight) {
      // scaled Gaussian, fan-in = product of all extents but the first
      int64_t fan_in = 1;
      for (size_t k = 1; k < p.shape.size(); ++k) fan_in *= p.shape[k];
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      CounterRng rng = CounterRng::keyed(seed, 0, site_id(p.name));
      for (auto& x : v) x = static_cast<float>(stddev * rng.normal());
    } else if (is_gamma) {
      std::fill(v.begin(), v.end(), 1.0f);
    }
    // biases and betas stay zero
  }
}

const Networks::DomainIds& Networks::domain(int d) const {
  if (d != 1 && d != 2)
    throw std::invalid_argument("domain must be 1 or 2, got " + std::to_string(d));
  return domains_[d - 1];
}

Tensor Networks::conv_block(ParamBinding& pb, const ConvIds& c, const Tensor& x,
                            int stride, int pad, PadMode mode) const {
  return conv2d(x, pb.get(c.w), pb.get(c.b), stride, pad, mode);
}

Tensor Networks::content_encode(ParamBinding& pb, int domain_idx,
                                const Tensor& image) const {
  const DomainIds& ids = domain(domain_idx);
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != 3)
    throw std::invalid_argument("content_encode: expected a 1 x 3 x H x W image, got " +
                                shape_str(s));
  if (s[2] % 4 != 0 || s[3] % 4 != 0)
    throw std::invalid_argument("content_encode: spatial extents must be divisible by 4, got " +
                                shape_str(s));
  Tensor h = image;
  const int strides[3] = {1, 2, 2};
  const int pads[3] = {3, 1, 1};
  for (int i = 0; i < 3; ++i) {
    h = conv_block(pb, ids.content.down[i], h, strides[i], pads[i], PadMode::reflect);
    h = instance_norm(h, pb.get(ids.content.norm[i].gamma),
                      pb.get(ids.content.norm[i].beta));
    h = relu(h);
  }
  for (int r = 0; r < 4; ++r) {
    const ResIds& rb = ids.content.res[r];
    Tensor f = conv_block(pb, rb.conv0, h, 1, 1, PadMode::reflect);
    f = instance_norm(f, pb.get(rb.norm0.gamma), pb.get(rb.norm0.beta));
    f = relu(f);
    f = conv_block(pb, rb.conv1, f, 1, 1, PadMode::reflect);
    f = instance_norm(f, pb.get(rb.norm1.gamma), pb.get(rb.norm1.beta));
    h = add(h, f);
  }
  return h;
}

Tensor Networks::style_encode(ParamBinding& pb, int domain_idx,
                              const Tensor& image) const {
  const DomainIds& ids = domain(domain_idx);
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != 3)
    throw std::invalid_argument("style_encode: expected a 1 x 3 x H x W image, got " +
                                shape_str(s));
  if (s[2] % 16 != 0 || s[3] % 16 != 0)
    throw std::invalid_argument("style_encode: spatial extents must be divisible by 16, got " +
                                shape_str(s));
  // no normalization here: the global statistics are the style signal
  Tensor h = image;
  for (int i = 0; i < 5; ++i) {
    h = conv_block(pb, ids.style.conv[i], h, i == 0 ? 1 : 2, i == 0 ? 3 : 1,
                   PadMode::reflect);
    h = relu(h);
  }
  h = global_avg_pool(h);
  h = reshape(h, {1, cfg_.content_channels()});
  return fully_connected(h, pb.get(ids.style.fc.w), pb.get(ids.style.fc.b));
}

Tensor Networks::mlp_adain_params(ParamBinding& pb, int domain_idx,
                                  const Tensor& style) const {
  const DomainIds& ids = domain(domain_idx);
  if (style.numel() != cfg_.style_dim)
    throw std::invalid_argument("mlp_adain_params: style code must have length " +
                                std::to_string(cfg_.style_dim) + ", got " +
                                std::to_string(style.numel()));
  Tensor h = reshape(style, {1, cfg_.style_dim});
  h = relu(fully_connected(h, pb.get(ids.decoder.mlp[0].w), pb.get(ids.decoder.mlp[0].b)));
  h = relu(fully_connected(h, pb.get(ids.decoder.mlp[1].w), pb.get(ids.decoder.mlp[1].b)));
  return fully_connected(h, pb.get(ids.decoder.mlp[2].w), pb.get(ids.decoder.mlp[2].b));
}

Tensor Networks::decode(ParamBinding& pb, int domain_idx, const Tensor& content,
                        const Tensor& style) const {
  const DomainIds& ids = domain(domain_idx);
  const Shape& cs = content.shape();
  const int64_t c4 = cfg_.content_channels();
  if (cs.size() != 4 || cs[1] != c4)
    throw std::invalid_argument("decode: expected a 1 x " + std::to_string(c4) +
                                " x h x w content code, got " + shape_str(cs));
  Tensor adain_vec = mlp_adain_params(pb, domain_idx, style);

  Tensor h = content;
  int64_t off = 0;
  for (int r = 0; r < 4; ++r) {
    const ResIds& rb = ids.decoder.res[r];
    Tensor f = conv_block(pb, rb.conv0, h, 1, 1, PadMode::reflect);
    Tensor gamma0 = slice_vec(adain_vec, off, off + c4);
    Tensor beta0 = slice_vec(adain_vec, off + c4, off + 2 * c4);
    off += 2 * c4;
    f = adain(f, gamma0, beta0);
    f = relu(f);
    f = conv_block(pb, rb.conv1, f, 1, 1, PadMode::reflect);
    Tensor gamma1 = slice_vec(adain_vec, off, off + c4);
    Tensor beta1 = slice_vec(adain_vec, off + c4, off + 2 * c4);
    off += 2 * c4;
    f = adain(f, gamma1, beta1);
    h = add(h, f);
  }
  h = upsample_nearest(h, 2);
  h = relu(conv_block(pb, ids.decoder.up0, h, 1, 2, PadMode::reflect));
  h = upsample_nearest(h, 2);
  h = relu(conv_block(pb, ids.decoder.up1, h, 1, 2, PadMode::reflect));
  h = conv_block(pb, ids.decoder.out, h, 1, 3, PadMode::reflect);
  return tanh_act(h);
}

std::vector<Tensor> Networks::discriminate(ParamBinding& pb, int domain_idx,
                                           const Tensor& image) const {
  const DomainIds& ids = domain(domain_idx);
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != 3)
    throw std::invalid_argument("discriminate: expected a 1 x 3 x H x W image, got " +
                                shape_str(s));
  const int scales = static_cast<int>(ids.disc.size());
  const int64_t min_side = std::min(s[2], s[3]);
  if (min_side >> (scales - 1) < 16)
    throw std::invalid_argument("discriminate: input " + shape_str(s) +
                                " too small for " + std::to_string(scales) +
                                " scales (needs >= " + std::to_string(16 << (scales - 1)) +
                                " pixels per side)");
  std::vector<Tensor> maps;
  maps.reserve(scales);
  Tensor h = image;
  for (int k = 0; k < scales; ++k) {
    if (k > 0) h = avg_pool_halve(h);
    Tensor f = h;
    for (int i = 0; i < 4; ++i) {
      f = conv_block(pb, ids.disc[k].conv[i], f, 2, 1, PadMode::zero);
      f = leaky_relu(f, 0.2f);
    }
    // unbounded real scores (least-squares objective)
    maps.push_back(conv_block(pb, ids.disc[k].head, f, 1, 0, PadMode::zero));
  }
  return maps;
}

}  // namespace ssit
