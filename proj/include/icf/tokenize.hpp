#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace icf {

// A fixed slice of one series plus its padding mask (1 = padded). The mask is
// always a left pad block, a contiguous real block, then a right pad block;
// padded slots store 0 at construction time, and nothing downstream may
// depend on what they store afterwards.
struct ExampleWindow {
  std::vector<double> values;
  std::vector<std::uint8_t> mask;

  std::size_t length() const { return values.size(); }
  std::size_t real_count() const;
  // The real values in order, pads stripped.
  std::vector<double> real_values() const;
};

// Pads a raw slice to `capacity` for training layouts: series shorter than
// one patch get a left pad of patch_len - len + 1 zeros (the smallest pad
// that pushes the real data into the second patch), everything is then
// right-padded to capacity.
ExampleWindow pad_example(const std::vector<double>& values, std::size_t patch_len,
                          std::size_t capacity);

// Pads a forecast history so that its end lands exactly on a patch boundary:
// left pad only, no right pad. The final patch is then fully real and the
// read-out token sits on the most recent observation.
ExampleWindow pad_history(const std::vector<double>& values, std::size_t patch_len,
                          std::size_t capacity);

// Non-overlapping length-p rows of a window, zero-filled past its end.
// A patch is attention-eligible iff its last slot is real (not padded from
// the right) and it holds at least one real value.
struct PatchGrid {
  std::size_t patch_len = 0;
  std::size_t num_patches = 0;
  std::vector<double> values;                 // num_patches x patch_len
  std::vector<std::uint8_t> masks;            // num_patches x patch_len
  std::vector<std::uint8_t> right_incomplete; // per patch: last slot padded
  std::vector<std::uint8_t> eligible;         // per patch

  // Concatenated rows; the tail past the source window length is zero.
  std::vector<double> flatten_values() const;
};

PatchGrid patchify(const ExampleWindow& window, std::size_t patch_len);

// Train layouts place a separator token after every example including the
// target, so the stream matches the statistics the model is trained on;
// infer layouts omit the target's separator so the last eligible token lines
// up with the end of the history.
enum class LayoutMode { kTrain, kInfer };

struct ContextLayout {
  struct Token {
    std::int32_t example;  // index into the window list
    std::int32_t patch;    // patch index within that example, -1 for separator
  };

  LayoutMode mode = LayoutMode::kTrain;
  std::vector<Token> tokens;
  std::vector<std::uint8_t> eligible;                       // per token
  std::vector<std::pair<std::size_t, std::size_t>> spans;   // per example: [begin, end) tokens

  std::size_t token_count() const { return tokens.size(); }
  bool is_separator(std::size_t t) const { return tokens[t].patch < 0; }
  std::size_t separator_count() const;
};

ContextLayout layout_context(const std::vector<ExampleWindow>& windows, std::size_t patch_len,
                             LayoutMode mode);

// An ordered group of example windows; the last one is the forecast target.
// mu/sd record the affine transform already applied to the stored values.
struct Context {
  std::vector<ExampleWindow> examples;
  double mu = 0.0;
  double sd = 1.0;

  std::size_t size() const { return examples.size(); }
  const ExampleWindow& target() const { return examples.back(); }
};

// Shifts and scales every example by the mean/std of the target's real
// points (std floored at sd_floor). Padded slots are left at zero. The
// transform is recorded so forecasts can be mapped back.
void standardize_context(Context& ctx, double sd_floor = 1e-6);

}  // namespace icf
