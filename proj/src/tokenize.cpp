#include "icf/tokenize.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace icf {

std::size_t ExampleWindow::real_count() const {
  std::size_t n = 0;
  for (std::uint8_t m : mask) {
    if (!m) ++n;
  }
  return n;
}

std::vector<double> ExampleWindow::real_values() const {
  std::vector<double> out;
  out.reserve(length());
  for (std::size_t i = 0; i < length(); ++i) {
    if (!mask[i]) out.push_back(values[i]);
  }
  return out;
}

ExampleWindow pad_example(const std::vector<double>& values, std::size_t patch_len,
                          std::size_t capacity) {
  const std::size_t len = values.size();
  if (len == 0) throw std::invalid_argument("pad_example: empty series");
  if (len > capacity) {
    throw std::invalid_argument("pad_example: series length " + std::to_string(len) +
                                " exceeds capacity " + std::to_string(capacity) +
                                "; window it first");
  }
  if (patch_len == 0 || patch_len >= capacity) {
    throw std::invalid_argument("pad_example: need 0 < patch_len < capacity");
  }

  const std::size_t left = len < patch_len ? patch_len - len + 1 : 0;
  ExampleWindow w;
  w.values.assign(capacity, 0.0);
  w.mask.assign(capacity, 1);
  for (std::size_t i = 0; i < len; ++i) {
    w.values[left + i] = values[i];
    w.mask[left + i] = 0;
  }
  return w;
}

ExampleWindow pad_history(const std::vector<double>& values, std::size_t patch_len,
                          std::size_t capacity) {
  const std::size_t len = values.size();
  if (len == 0) throw std::invalid_argument("pad_history: empty history");
  if (len > capacity) {
    throw std::invalid_argument("pad_history: history length " + std::to_string(len) +
                                " exceeds capacity " + std::to_string(capacity));
  }
  const std::size_t left = (patch_len - len % patch_len) % patch_len;
  ExampleWindow w;
  w.values.assign(left + len, 0.0);
  w.mask.assign(left + len, 1);
  for (std::size_t i = 0; i < len; ++i) {
    w.values[left + i] = values[i];
    w.mask[left + i] = 0;
  }
  return w;
}

std::vector<double> PatchGrid::flatten_values() const { return values; }

PatchGrid patchify(const ExampleWindow& window, std::size_t patch_len) {
  if (patch_len == 0) throw std::invalid_argument("patchify: patch_len must be positive");
  const std::size_t len = window.length();
  if (len == 0) throw std::invalid_argument("patchify: empty window");

  PatchGrid g;
  g.patch_len = patch_len;
  g.num_patches = (len + patch_len - 1) / patch_len;
  g.values.assign(g.num_patches * patch_len, 0.0);
  g.masks.assign(g.num_patches * patch_len, 1);  // slots past the window count as padded
  g.right_incomplete.assign(g.num_patches, 0);
  g.eligible.assign(g.num_patches, 0);

  for (std::size_t i = 0; i < len; ++i) {
    g.values[i] = window.values[i];
    g.masks[i] = window.mask[i];
  }
  for (std::size_t j = 0; j < g.num_patches; ++j) {
    const std::uint8_t* mrow = g.masks.data() + j * patch_len;
    g.right_incomplete[j] = mrow[patch_len - 1];
    bool any_real = false;
    for (std::size_t c = 0; c < patch_len; ++c) {
      if (!mrow[c]) {
        any_real = true;
        break;
      }
    }
    g.eligible[j] = (!g.right_incomplete[j] && any_real) ? 1 : 0;
  }
  return g;
}

std::size_t ContextLayout::separator_count() const {
  std::size_t n = 0;
  for (const Token& t : tokens) {
    if (t.patch < 0) ++n;
  }
  return n;
}

ContextLayout layout_context(const std::vector<ExampleWindow>& windows, std::size_t patch_len,
                             LayoutMode mode) {
  if (windows.empty()) throw std::invalid_argument("layout_context: empty context");

  ContextLayout layout;
  layout.mode = mode;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    PatchGrid g = patchify(windows[i], patch_len);
    std::size_t begin = layout.tokens.size();
    for (std::size_t j = 0; j < g.num_patches; ++j) {
      layout.tokens.push_back({static_cast<std::int32_t>(i), static_cast<std::int32_t>(j)});
      layout.eligible.push_back(g.eligible[j]);
    }
    const bool is_target = (i + 1 == windows.size());
    if (mode == LayoutMode::kTrain || !is_target) {
      layout.tokens.push_back({static_cast<std::int32_t>(i), -1});
      layout.eligible.push_back(1);  // separators are never masked
    }
    layout.spans.emplace_back(begin, layout.tokens.size());
  }
  return layout;
}

void standardize_context(Context& ctx, double sd_floor) {
  if (ctx.examples.empty()) throw std::invalid_argument("standardize_context: empty context");
  const ExampleWindow& target = ctx.target();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < target.length(); ++i) {
    if (!target.mask[i]) {
      sum += target.values[i];
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("standardize_context: target has no real points");
  double mu = sum / static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < target.length(); ++i) {
    if (!target.mask[i]) {
      double d = target.values[i] - mu;
      var += d * d;
    }
  }
  double sd = std::sqrt(var / static_cast<double>(n));
  if (sd < sd_floor) sd = sd_floor;

  for (ExampleWindow& w : ctx.examples) {
    for (std::size_t i = 0; i < w.length(); ++i) {
      if (!w.mask[i]) w.values[i] = (w.values[i] - mu) / sd;
    }
  }
  ctx.mu = mu;
  ctx.sd = sd;
}

}  // namespace icf
