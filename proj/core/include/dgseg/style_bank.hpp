#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dgseg/fourier.hpp"
#include "dgseg/image.hpp"
#include "dgseg/stylizer.hpp"

namespace dgseg {

enum class StyleKind { kPainting, kTexture };
enum class StylizerKind { kNeural, kFrequencySwap, kCustom };

std::string to_string(StyleKind k);
std::string to_string(StylizerKind k);
StylizerKind parse_stylizer_kind(const std::string& s);

struct StyleRef {
  int style_id = 0;
  StyleKind kind = StyleKind::kPainting;
  std::filesystem::path source;

  friend bool operator==(const StyleRef&, const StyleRef&) = default;
};

struct StyleBankConfig {
  /// Active styles A.
  int size = 20;
  /// Candidate style images drawn from the directory before choosing A.
  int pool_size = 25;
  StylizerKind kind = StylizerKind::kNeural;
  FrequencySwapConfig frequency;
  StylizerArch arch;
  StylizerTrainConfig train;
  std::uint64_t seed = 0;
  int workers = 1;
};

void validate(const StyleBankConfig& cfg);

/// Indexed styles plus the state needed to apply each one. Immutable after
/// construction; stylize() may be called concurrently.
class StyleBank {
 public:
  using StyleFn = std::function<Image(const Image&)>;

  StyleBank() = default;

  /// Frequency-swap bank over already-loaded style images.
  static StyleBank frequency(std::vector<StyleRef> refs, std::vector<Image> images, const FrequencySwapConfig& cfg);
  static StyleBank neural(std::vector<StyleRef> refs, std::vector<Image> images,
                          std::vector<NeuralStylizerParams> params);
  /// Arbitrary per-style functions (used for analysis and tests; not persistable).
  static StyleBank custom(std::vector<StyleRef> refs, std::vector<StyleFn> fns);

  int size() const noexcept { return static_cast<int>(styles_.size()); }
  StylizerKind kind() const noexcept { return kind_; }
  const std::vector<StyleRef>& styles() const noexcept { return styles_; }
  const StyleRef& style(int style_id) const;
  const Image& style_image(int style_id) const;
  const FrequencySwapConfig& frequency_config() const noexcept { return freq_; }
  const NeuralStylizerParams& neural_params(int style_id) const;

  /// Same dimensions as `source`, values in [0, 1].
  Image stylize(int style_id, const Image& source) const;

 private:
  std::size_t index_of(int style_id) const;

  StylizerKind kind_ = StylizerKind::kNeural;
  std::vector<StyleRef> styles_;
  std::vector<Image> images_;
  FrequencySwapConfig freq_;
  std::vector<NeuralStylizerParams> params_;
  std::vector<std::shared_ptr<const NeuralStylizer>> nets_;
  std::vector<StyleFn> fns_;
};

/// Lists style images under <dir>/paintings and <dir>/textures (sorted).
std::vector<StyleRef> discover_styles(const std::filesystem::path& style_dir);

/// Chooses the active styles: `pool_size` candidates, then A balanced between
/// paintings (ceil(A/2)) and textures (floor(A/2)), topping up from the other
/// kind when one runs short. Ids are assigned 0..A-1 in the returned order.
std::vector<StyleRef> select_styles(const std::vector<StyleRef>& available, int size, int pool_size,
                                    std::uint64_t seed);

/// Selects styles and trains (neural) or caches (frequency-swap) their state.
/// `content` supplies training crops for the neural stylizers.
StyleBank build_style_bank(const std::filesystem::path& style_dir, const StyleBankConfig& cfg,
                           std::span<const Image> content);

Image stylize(const StyleBank& bank, int style_id, const Image& source);

inline constexpr int kStyleBankVersion = 1;

/// Directory layout: bank.json, style_XXX.png per style, style_XXX.bin per
/// neural style.
void save_style_bank(const std::filesystem::path& dir, const StyleBank& bank);
StyleBank load_style_bank(const std::filesystem::path& dir);

}  // namespace dgseg
