#include <benchmark/benchmark.h>

#include "dgseg/fourier.hpp"
#include "dgseg/losses.hpp"
#include "dgseg/mining.hpp"
#include "dgseg/model.hpp"
#include "dgseg/stylizer.hpp"

namespace {

using namespace dgseg;

Image noise_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

void BM_ConvForward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  Rng rng(1);
  nn::Conv2d conv("c", ch, ch, 3, 1, true, rng);
  nn::Tensor x(1, ch, 64, 64);
  for (auto& v : x.span()) v = static_cast<float>(rng.uniform());
  for (auto _ : state) benchmark::DoNotOptimize(conv.infer(x));
}
BENCHMARK(BM_ConvForward)->Arg(16)->Arg(64);

void BM_ModelTrainStep(benchmark::State& state) {
  ModelConfig cfg;
  SegModel model(cfg);
  const Image img = noise_image(64, 64, 2);
  const nn::Tensor x = to_tensor(std::vector<Image>{img, img});
  for (auto _ : state) {
    const ForwardResult r = model.forward(x);
    model.backward(nn::Tensor(), r.logits);
  }
}
BENCHMARK(BM_ModelTrainStep);

void BM_SupCon(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(3);
  std::vector<std::vector<double>> vecs(n, std::vector<double>(64));
  std::vector<int> cls(n);
  for (int i = 0; i < n; ++i) {
    for (auto& v : vecs[i]) v = rng.normal();
    cls[i] = static_cast<int>(rng.uniform_int(std::uint64_t{6}));
  }
  const PixelFeatureSet set = make_feature_set(vecs, cls);
  std::vector<double> dz;
  for (auto _ : state) benchmark::DoNotOptimize(supcon_loss_grad(set, {}, dz));
}
BENCHMARK(BM_SupCon)->Arg(128)->Arg(512);

void BM_FrequencyStylize(benchmark::State& state) {
  const Image src = noise_image(128, 128, 4), sty = noise_image(128, 128, 5);
  for (auto _ : state) benchmark::DoNotOptimize(stylize_frequency(src, sty, {.beta = 0.01}));
}
BENCHMARK(BM_FrequencyStylize);

void BM_NeuralStylize(benchmark::State& state) {
  const NeuralStylizer net(StylizerArch{}, 6);
  const Image src = noise_image(64, 64, 7);
  for (auto _ : state) benchmark::DoNotOptimize(net.apply(src));
}
BENCHMARK(BM_NeuralStylize);

void BM_Mining(benchmark::State& state) {
  const int styles = static_cast<int>(state.range(0));
  std::vector<StyleRef> refs;
  std::vector<StyleBank::StyleFn> fns;
  for (int k = 0; k < styles; ++k) {
    refs.push_back({k, StyleKind::kTexture, ""});
    const float g = 0.5f + 0.05f * k;
    fns.push_back([g](const Image& img) {
      Image out = img;
      for (auto& v : out.data()) v *= g;
      return out;
    });
  }
  const StyleBank bank = StyleBank::custom(refs, fns);
  ModelConfig cfg;
  const SegModel model(cfg);
  const Encoder enc = [&model](const nn::Tensor& x) { return model.encode_frozen(x); };
  std::vector<Image> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(noise_image(64, 64, 10 + i));
  for (auto _ : state) {
    Rng rng(1);
    benchmark::DoNotOptimize(mine_adversarial_styles(batch, bank, enc, MiningPolicy::kAdversarial, rng));
  }
}
BENCHMARK(BM_Mining)->Arg(4)->Arg(20);

}  // namespace
BENCHMARK_MAIN();
