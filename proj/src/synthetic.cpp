#include "deltaquant/synthetic.hpp"

#include <random>

#include "deltaquant/safetensors.hpp"

namespace dq {

std::vector<LayerPair> make_synthetic_layers(const SyntheticSpec& spec) {
  if (spec.layers < 0 || spec.rows <= 0 || spec.cols <= 0) {
    throw InvalidConfig("synthetic dimensions must be positive");
  }
  if (!(spec.delta_sigma > 0.0)) throw InvalidConfig("delta_sigma must be positive");
  std::vector<LayerPair> pairs;
  pairs.reserve(static_cast<std::size_t>(spec.layers));
  for (int layer = 0; layer < spec.layers; ++layer) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(layer)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::string name = "layers." + std::to_string(layer) + ".weight";
    Tensor base(name, {spec.rows, spec.cols});
    Tensor post(name, {spec.rows, spec.cols});
    for (Eigen::Index i = 0; i < base.data.size(); ++i) base.data[i] = static_cast<float>(normal(rng));
    for (Eigen::Index i = 0; i < post.data.size(); ++i) {
      post.data[i] = static_cast<float>(base.data[i] + spec.delta_sigma * normal(rng));
    }
    pairs.push_back({name, std::move(base), std::move(post)});
  }
  return pairs;
}

void write_synthetic_checkpoints(const SyntheticSpec& spec, const std::filesystem::path& base_path,
                                 const std::filesystem::path& post_path) {
  const auto pairs = make_synthetic_layers(spec);
  std::vector<st::RawTensor> base, post;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    base.push_back(st::from_tensor(pairs[i].base));
    post.push_back(st::from_tensor(pairs[i].post));
    Tensor norm("layers." + std::to_string(i) + ".norm", {spec.cols});
    norm.data.setOnes();
    base.push_back(st::from_tensor(norm));
    norm.data *= 1.01f;
    post.push_back(st::from_tensor(norm));
  }
  st::write(base_path, base);
  st::write(post_path, post);
}

}  // namespace dq
