// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>

#include "dgseg/augment.hpp"
#include "dgseg/config.hpp"
#include "dgseg/fourier.hpp"
#include "dgseg/losses.hpp"
#include "dgseg/metrics.hpp"
#include "dgseg/mining.hpp"
#include "dgseg/train.hpp"
#include "loss_oracles.hpp"
#include "test_util.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dgseg;
using testing::LossInstance;
using testing::Vec;

struct Check {
  bool ok = true;
  std::string first_failure;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) first_failure = what;
    ok = ok && cond;
  }
};

PixelFeatureSet to_set(const LossInstance& inst) {
  std::vector<std::vector<double>> v;
  for (const auto& r : inst.z) v.emplace_back(r.begin(), r.end());
  return make_feature_set(v, inst.y);
}

int random_count(Rng& rng, int lo, int hi) { return rng.uniform_int(lo, hi); }

// 1. Losses against naive loops.
void loss_oracles(Check& c) {
  const auto pinned = make_feature_set(std::vector<std::vector<double>>{{1, 0}, {1, 0}, {0, 1}}, std::vector<int>{0, 0, 1});
  c.expect(std::abs(supcon_loss(pinned, {.temperature = 1.0}) - 0.626524) < 1e-6, "pinned supcon 0.626524");
  const auto same = make_feature_set(std::vector<std::vector<double>>{{0, 1}, {0, 1}, {0, 1}}, std::vector<int>{1, 1, 1});
  c.expect(std::abs(supcon_loss(same, {.temperature = 0.07}) - 3 * std::log(2.0)) < 1e-9, "pinned supcon 3 log 2");
  Rng rng(101);
  for (int trial = 0; trial < 150; ++trial) {
    const LossInstance inst = testing::random_instance(rng, random_count(rng, 2, 16), random_count(rng, 1, 8),
                                                       random_count(rng, 1, 4));
    const auto set = to_set(inst);
    const double tau = rng.uniform(0.05, 1.0);
    const bool mean_of_logs = rng.bernoulli(0.5);
    const long double s_want = testing::supcon_oracle(inst.z, inst.y, tau, mean_of_logs);
    c.expect(testing::rel_err(supcon_loss(set, {.temperature = tau, .mean_of_logs = mean_of_logs}), s_want) <= 1e-6,
             "supcon trial " + std::to_string(trial));
    const CosineOptions opt{.all_pairs = rng.bernoulli(0.5),
                            .absolute = rng.bernoulli(0.5),
                            .centroid_norm = rng.bernoulli(0.5) ? CentroidNorm::kL2 : CentroidNorm::kL1};
    const long double c_want = testing::cosine_oracle(inst.z, inst.y, opt.all_pairs, opt.absolute,
                                                      opt.centroid_norm == CentroidNorm::kL2);
    const double c_got = cosine_separation_loss(set, class_centroids(set, opt.centroid_norm), opt);
    // Near-zero sums of signed cosines make a pure relative bound ill-posed.
    c.expect(std::abs(c_got - c_want) <= 1e-6 * std::max(1.0L, std::abs(c_want)), "cosine trial " + std::to_string(trial));
  }
}

template <class F>
double max_grad_error(std::vector<long double>& x, const std::vector<long double>& g, F&& f) {
  const long double h = 1e-4L;
  double worst = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const long double orig = x[k];
    x[k] = orig + h;
    const long double up = f();
    x[k] = orig - h;
    const long double dn = f();
    x[k] = orig;
    const long double num = (up - dn) / (2 * h);
    worst = std::max(worst, static_cast<double>(std::abs(num - g[k]) / std::max(1.0L, std::abs(num))));
  }
  return worst;
}

// 2. Analytic gradients against central differences in long double.
void gradient_checks(Check& c) {
  Rng rng(202);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = random_count(rng, 3, 12), d = random_count(rng, 2, 8);
    const LossInstance inst = testing::random_instance(rng, n, d, random_count(rng, 2, 3), false);
    std::vector<long double> z;
    for (const auto& v : inst.z) z.insert(z.end(), v.begin(), v.end());
    std::vector<long double> g(z.size()), scratch(z.size());
    const long double tau = rng.uniform(0.1, 1.0);
    const bool mean_of_logs = rng.bernoulli(0.5), mean = rng.bernoulli(0.5);
    kernels::supcon<long double>(z.data(), n, d, inst.y.data(), tau, mean_of_logs, mean, g.data());
    const double es = max_grad_error(z, g, [&] {
      return kernels::supcon<long double>(z.data(), n, d, inst.y.data(), tau, mean_of_logs, mean, nullptr);
    });
    c.expect(es <= 1e-4, "supcon gradient trial " + std::to_string(trial) + " err " + std::to_string(es));

    const CosineOptions opt{.all_pairs = rng.bernoulli(0.5),
                            .absolute = rng.bernoulli(0.5),
                            .centroid_norm = rng.bernoulli(0.5) ? CentroidNorm::kL2 : CentroidNorm::kL1};
    kernels::cosine_separation_grad<long double>(z.data(), n, d, inst.y.data(), opt, g.data());
    const double ec = max_grad_error(z, g, [&] {
      return kernels::cosine_separation_grad<long double>(z.data(), n, d, inst.y.data(), opt, scratch.data());
    });
    c.expect(ec <= 1e-4, "cosine gradient trial " + std::to_string(trial) + " err " + std::to_string(ec));

    const int classes = random_count(rng, 2, 6);
    const std::size_t npix = random_count(rng, 1, 12);
    std::vector<long double> logits(classes * npix);
    for (auto& v : logits) v = rng.uniform(-3.0, 3.0);
    std::vector<std::uint8_t> label(npix);
    for (auto& l : label) l = rng.bernoulli(0.15) ? kIgnore : static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1));
    std::vector<long double> gl(logits.size());
    kernels::cross_entropy<long double>(logits.data(), classes, npix, label.data(), kIgnore, gl.data(), nullptr);
    const double ee = max_grad_error(logits, gl, [&] {
      return kernels::cross_entropy<long double>(logits.data(), classes, npix, label.data(), kIgnore, nullptr, nullptr);
    });
    c.expect(ee <= 1e-4, "cross-entropy gradient trial " + std::to_string(trial));
  }
}

// 3. Confusion and IoU against per-pixel counting.
void metric_oracle(Check& c) {
  ConfusionMatrix hand(2);
  LabelMap g(2, 2), p(2, 2);
  const std::uint8_t gv[] = {0, 0, 1, 1}, pv[] = {0, 1, 1, 1};
  std::copy(gv, gv + 4, g.data().begin());
  std::copy(pv, pv + 4, p.data().begin());
  hand.accumulate(g, p);
  c.expect(std::abs(make_report(hand, {}, std::nullopt).miou - 0.583333333333) < 1e-9, "hand 2x2 mIoU");

  Rng rng(303);
  const int classes = 5;
  ConfusionMatrix single(classes), merged(classes);
  for (int trial = 0; trial < 200; ++trial) {
    LabelMap gt = testing::random_label(8, 8, classes, rng);
    const LabelMap pred = testing::random_label(8, 8, classes, rng);
    for (auto& v : gt.data())
      if (rng.bernoulli(0.05)) v = kIgnore;
    ConfusionMatrix cm(classes);
    cm.accumulate(gt, pred);
    single.accumulate(gt, pred);
    merged = merge_confusion(merged, cm);
    const EvalReport r = make_report(cm, {}, std::nullopt);
    double sum = 0;
    int present = 0;
    for (int k = 0; k < classes; ++k) {
      std::uint64_t tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < 64; ++i) {
        if (gt.data()[i] == kIgnore) continue;
        const bool a = gt.data()[i] == k, b = pred.data()[i] == k;
        tp += a && b;
        fp += !a && b;
        fn += a && !b;
      }
      std::uint64_t row = 0, col = 0;
      for (int j = 0; j < classes; ++j) {
        if (j == k) continue;
        row += cm.at(k, j);
        col += cm.at(j, k);
      }
      c.expect(cm.at(k, k) == tp && row == fn && col == fp, "confusion counts trial " + std::to_string(trial));
      if (tp + fp + fn == 0) {
        c.expect(!r.iou[k].has_value(), "absent class has no IoU");
        continue;
      }
      const double iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
      c.expect(r.iou[k] && *r.iou[k] == iou, "IoU trial " + std::to_string(trial));
      sum += iou;
      ++present;
    }
    c.expect(std::abs(r.miou - sum / present) < 1e-12, "mIoU trial " + std::to_string(trial));
  }
  c.expect(single == merged, "merge_confusion equals single pass");
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b.data()[i]));
  return m;
}

// 4. Frequency-swap identities.
void stylizer_identities(Check& c) {
  Rng rng(404);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = random_count(rng, 4, 40), w = random_count(rng, 4, 40);
    const Image src = testing::random_image(h, w, rng);
    const Image sty = testing::random_image(random_count(rng, 4, 40), random_count(rng, 4, 40), rng);
    c.expect(max_abs_diff(stylize_frequency(src, sty, {.beta = 0.0}), src) <= 1e-6, "beta=0 identity");
    const double beta = rng.uniform(0.01, 0.5);
    c.expect(max_abs_diff(stylize_frequency(src, src, {.beta = beta}), src) <= 1e-6, "self-style identity");
    std::vector<double> plane(h * w);
    for (auto& v : plane) v = rng.uniform();
    double e_img = 0, e_spec = 0;
    for (double v : plane) e_img += v * v;
    for (const auto& z : dft2(plane, h, w)) e_spec += std::norm(z);
    c.expect(std::abs(e_img - e_spec / (h * w)) <= 1e-5 * e_img, "Parseval");
  }
  const Image out = stylize_frequency(Image(8, 8, 0.2f), Image(8, 8, 0.8f), {.beta = 0.15});
  c.expect(max_abs_diff(out, Image(8, 8, 0.8f)) <= 1e-6, "constant DC swap");
}

StyleBank gain_bank(const std::vector<float>& gains) {
  std::vector<StyleRef> refs;
  std::vector<StyleBank::StyleFn> fns;
  for (std::size_t k = 0; k < gains.size(); ++k) {
    refs.push_back({static_cast<int>(k), StyleKind::kTexture, ""});
    const float g = gains[k];
    fns.push_back([g](const Image& img) {
      Image out = img;
      for (auto& v : out.data()) v *= g;
      return out;
    });
  }
  return StyleBank::custom(refs, fns);
}

nn::Tensor pooled_encoder(const nn::Tensor& x) {
  nn::Tensor out(x.n(), 2, x.h() / 2, x.w() / 2);
  for (int n = 0; n < x.n(); ++n)
    for (int y = 0; y < out.h(); ++y)
      for (int xx = 0; xx < out.w(); ++xx) {
        float s[3];
        for (int k = 0; k < 3; ++k)
          s[k] = 0.25f * (x.at(n, k, 2 * y, 2 * xx) + x.at(n, k, 2 * y + 1, 2 * xx) + x.at(n, k, 2 * y, 2 * xx + 1) +
                          x.at(n, k, 2 * y + 1, 2 * xx + 1));
        out.at(n, 0, y, xx) = s[0] - 0.5f * s[1];
        out.at(n, 1, y, xx) = s[2] * s[2];
      }
  return out;
}

// 5. Mining argmax, ties and determinism.
void mining_correctness(Check& c) {
  Rng rng(505);
  for (int trial = 0; trial < 25; ++trial) {
    const int a = random_count(rng, 1, 20);
    std::vector<float> gains(a);
    for (auto& g : gains) g = static_cast<float>(rng.uniform(0.2, 1.8));
    const StyleBank bank = gain_bank(gains);
    std::vector<Image> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(testing::random_image(8, 8, rng));
    Rng r1(trial), r2(trial);
    const auto res = mine_adversarial_styles(batch, bank, pooled_encoder, MiningPolicy::kAdversarial, r1, 1);
    const auto res4 = mine_adversarial_styles(batch, bank, pooled_encoder, MiningPolicy::kAdversarial, r2, 4);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const nn::Tensor f0 = pooled_encoder(to_tensor(batch[i]));
      int best = -1;
      double best_d = -1;
      for (int k = 0; k < a; ++k) {
        const nn::Tensor fk = pooled_encoder(to_tensor(bank.stylize(k, batch[i])));
        double s = 0;
        for (std::size_t j = 0; j < f0.size(); ++j) s += std::abs(double(f0.data()[j]) - fk.data()[j]);
        s /= static_cast<double>(f0.size());
        c.expect(std::abs(res[i].distances[k] - s) <= 1e-12, "distance table");
        if (s > best_d) {
          best_d = s;
          best = k;
        }
      }
      const double mx = *std::max_element(res[i].distances.begin(), res[i].distances.end());
      c.expect(res[i].distances[res[i].chosen_style] == mx, "chosen distance is the max");
      c.expect(res[i].chosen_style == best, "argmax matches naive loop");
      c.expect(res[i].chosen_style == res4[i].chosen_style && res[i].distances == res4[i].distances,
               "deterministic across workers");
    }
  }
  auto offset_bank = [](std::vector<float> offsets) {
    std::vector<StyleRef> refs;
    std::vector<StyleBank::StyleFn> fns;
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      refs.push_back({static_cast<int>(k), StyleKind::kTexture, ""});
      const float d = offsets[k];
      fns.push_back([d](const Image& img) {
        Image out = img;
        for (auto& v : out.data()) v -= d;
        return out;
      });
    }
    return StyleBank::custom(refs, fns);
  };
  const auto identity = [](const nn::Tensor& x) { return x; };
  const std::vector<Image> bright{Image(4, 4, 0.8f)};
  Rng r(1);
  c.expect(mine_adversarial_styles(bright, offset_bank({0.1f, 0.5f}), identity, MiningPolicy::kAdversarial, r)[0]
                   .chosen_style == 1,
           "darkening case");
  c.expect(mine_adversarial_styles(bright, offset_bank({0.1f, 0.3f, 0.3f}), identity, MiningPolicy::kAdversarial, r)[0]
                   .chosen_style == 1,
           "tie goes to lowest id");
}

bool pixel_equal(const Sample& out, const Sample& in, int y, int x) {
  for (int ch = 0; ch < 3; ++ch)
    if (out.image.at(ch, y, x) != in.image.at(ch, y, x)) return false;
  return out.label.at(y, x) == in.label.at(y, x);
}

// 6. Every mixed pixel comes from the pool member its provenance names.
void augmentation_provenance(Check& c) {
  Rng rng(606);
  ToySceneSpec spec;
  spec.height = 32;
  spec.width = 40;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = random_count(rng, 1, 4);
    const std::uint64_t seed = rng.next_u64();
    const bool same_geometry = trial % 2 == 0;
    std::vector<Sample> pool;
    for (int k = 0; k < n; ++k) {
      Sample s = generate_toy_sample(spec, same_geometry ? 0 : k, seed);
      Rng tex(seed ^ (k + 1));
      for (auto& v : s.image.data()) v = static_cast<float>(tex.uniform());
      pool.push_back(std::move(s));
    }
    AugConfig cfg;
    cfg.cutmix_prob = rng.uniform();
    cfg.copy_paste_prob = rng.uniform();
    const MixResult r = style_mix(pool, rng, cfg);
    bool ok = true;
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const int k = r.provenance[y * spec.width + x];
        ok = ok && k < n && pixel_equal(r.sample, pool[k], y, x);
      }
    c.expect(ok, "style_mix provenance trial " + std::to_string(trial));
    if (same_geometry) c.expect(r.sample.label == pool[0].label, "same-geometry label preserved");

    const CutBox box = sample_cut_box(spec.height, spec.width, 1.0, rng);
    const Sample cm = cut_mix(pool[0], pool[n - 1], box);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const bool inside = x >= box.x && x < box.x + box.w && y >= box.y && y < box.y + box.h;
        c.expect(pixel_equal(cm, inside ? pool[n - 1] : pool[0], y, x), "cut_mix box provenance");
      }
    const auto inst = pool[n - 1].instances;
    const Sample cp = copy_paste(pool[0], pool[n - 1], inst);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        bool under = false;
        for (const auto& m : inst) under = under || m.at(y, x);
        c.expect(pixel_equal(cp, under ? pool[n - 1] : pool[0], y, x), "copy_paste mask provenance");
      }

    AugConfig flip;
    flip.flip_prob = 1.0;
    flip.brightness = flip.contrast = flip.saturation = 0.0;
    const Sample once = flip_and_jitter(pool[0], rng, flip);
    c.expect(flip_and_jitter(once, rng, flip) == pool[0], "flip involution");
  }
}

// Shared toy setup for the training criteria.
struct ToyWorld {
  fs::path root;
  DatasetManifest source;
  DatasetManifest night;
  std::optional<StyleBank> bank;
};

ToyWorld make_world(const fs::path& root) {
  ToyWorld w;
  w.root = root;
  ToySceneSpec spec;
  w.source = generate_toy_dataset(spec, 128, 1);
  spec.variant = ToyVariant::kNight;
  w.night = generate_toy_dataset(spec, 64, 1001);
  generate_style_images(root / "styles", 10, 10, 64, derive_seed(1, {hash_name("styles")}));
  return w;
}

void build_bank(ToyWorld& w) {
  RunConfig rc;
  apply_seed(rc, 1);
  StyleBankConfig bc = rc.styles.bank;
  bc.size = 8;
  bc.train.steps = 600;
  bc.train.learning_rate = 3e-3;
  std::vector<Image> content;
  for (std::size_t i = 0; i < 16; ++i) content.push_back(load_sample(w.source, i).image);
  w.bank.emplace(build_style_bank(w.root / "styles", bc, content));
}

struct Variant {
  std::string name;
  std::function<void(RunConfig&)> apply;
};

RunConfig toy_run_config(std::uint64_t seed) {
  RunConfig rc;
  apply_seed(rc, seed);
  rc.train.iterations = 2000;
  rc.train.learning_rate = 1e-3;
  rc.train.validate_every = 0;
  return rc;
}

void baseline(RunConfig& rc) {
  rc.train.use_stylization = false;
  rc.train.weights.supcon = 0;
  rc.train.weights.cosine = 0;
}

double train_and_eval(const ToyWorld& w, const RunConfig& rc, const fs::path& dir) {
  SegModel model(rc.model);
  const StyleBank* bank = rc.train.use_stylization ? &*w.bank : nullptr;
  train(rc.train, w.source, bank, model, {.dir = dir});
  return evaluate(model, w.night, 1).miou;
}

// 7. Night-domain generalization of the full framework over a CE-only baseline.
void toy_generalization(Check& c, ToyWorld& w) {
  build_bank(w);
  double gain_sum = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    RunConfig base = toy_run_config(seed);
    baseline(base);
    const double b = train_and_eval(w, base, w.root / ("base_" + std::to_string(seed)));
    const double f = train_and_eval(w, toy_run_config(seed), w.root / ("full_" + std::to_string(seed)));
    std::printf("  seed %llu: baseline night mIoU %.4f, full %.4f\n", static_cast<unsigned long long>(seed), b, f);
    std::fflush(stdout);
    gain_sum += f - b;
  }
  const double mean_gain = gain_sum / 3;
  std::printf("  mean gain %.4f (required >= 0.05)\n", mean_gain);
  c.expect(mean_gain >= 0.05, "mean night mIoU gain " + std::to_string(mean_gain));

  // Soft report, seed 1: stylized training with the ablation ladder of mixing
  // operations, then the cosine term on top (the full run above).
  const std::vector<Variant> ladder{
      {"stylized", [](RunConfig& r) { r.train.style_mix = false; }},
      {"+cut-mix", [](RunConfig& r) { r.train.aug.copy_paste_prob = 0; }},
      {"+copy-paste", [](RunConfig& r) { r.train.aug.cutmix_prob = 0; }},
      {"+both", [](RunConfig&) {}},
  };
  std::printf("  soft report (seed 1, not asserted):\n");
  for (const auto& v : ladder) {
    RunConfig rc = toy_run_config(1);
    rc.train.weights.cosine = 0;
    v.apply(rc);
    std::printf("    %-12s %.4f\n", v.name.c_str(), train_and_eval(w, rc, w.root / ("ladder_" + v.name)));
    std::fflush(stdout);
  }
  std::printf("    %-12s (full run, seed 1 above)\n", "+cosine");
}

// 8. Identical configs give byte-identical logs and checkpoints.
void determinism(Check& c, const ToyWorld& w) {
  DatasetManifest small = w.source;
  small.records.resize(16);
  Rng style_rng(8);
  const StyleBank bank =
      StyleBank::frequency({{0, StyleKind::kTexture, ""}, {1, StyleKind::kPainting, ""}},
                           {testing::constant_image(64, 64, 0.2f), testing::random_image(64, 64, style_rng)}, {.beta = 0.05});
  RunConfig rc = toy_run_config(5);
  rc.train.iterations = 40;
  rc.train.checkpoint_every = 15;
  std::string logs[2], ckpts[2];
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = w.root / ("det_" + std::to_string(k));
    SegModel model(rc.model);
    train(rc.train, small, &bank, model, {.dir = dir});
    logs[k] = testing::read_file(dir / "metrics.tsv");
    ckpts[k] = testing::read_file(dir / "last.ckpt");
  }
  c.expect(!logs[0].empty() && logs[0] == logs[1], "metrics.tsv identical");
  c.expect(!ckpts[0].empty() && ckpts[0] == ckpts[1], "last.ckpt identical");
}

}  // namespace

int main() {
  testing::TempDir root("acceptance");
  std::optional<ToyWorld> world;
  auto get_world = [&]() -> ToyWorld& {
    if (!world) world.emplace(make_world(root.path()));
    return *world;
  };
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<void(Check&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "loss oracle equivalence", 10, loss_oracles},
      {2, "gradient checks", 30, gradient_checks},
      {3, "metric oracle", 10, metric_oracle},
      {4, "stylizer identities", 10, stylizer_identities},
      {5, "mining correctness", 30, mining_correctness},
      {6, "augmentation provenance", 30, augmentation_provenance},
      {7, "toy generalization", 1800, [&](Check& c) { toy_generalization(c, get_world()); }},
      {8, "end-to-end determinism", 1800, [&](Check& c) { determinism(c, get_world()); }},
  };
  int failures = 0;
  for (const auto& cr : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < cr.budget_s, "runtime " + std::to_string(secs) + " s over budget");
    std::printf("%s criterion %d (%s) %.1fs%s%s\n", c.ok ? "PASS" : "FAIL", cr.id, cr.name, secs,
                c.ok ? "" : ": ", c.first_failure.c_str());
    std::fflush(stdout);
    failures += !c.ok;
  }
  return failures == 0 ? 0 : 1;
}
