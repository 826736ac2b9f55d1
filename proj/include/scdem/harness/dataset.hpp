#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "scdem/numerics/random.hpp"

namespace scdem {

enum class Split { train, test };

/// Labeled samples: inputs [n x d_x] and one global class index per row.
struct Dataset {
  std::string name;
  Tensor inputs;
  std::vector<std::size_t> labels;
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return inputs.dim(1); }

  /// Rows at `indices`, in that order, as a fresh constant tensor.
  Tensor gather(std::span<const std::size_t> indices) const {
    const std::size_t d = input_dim();
    const auto v = inputs.values();
    std::vector<double> out(indices.size() * d);
    for (std::size_t r = 0; r < indices.size(); ++r) std::copy_n(&v[indices[r] * d], d, &out[r * d]);
    return Tensor::matrix(indices.size(), d, std::move(out));
  }

  std::vector<std::size_t> gather_labels(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels[i]);
    return out;
  }

  /// Rows whose label satisfies `keep`, in original order.
  template <typename Pred>
  Dataset filter(Pred keep, std::string new_name) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < size(); ++i)
      if (keep(labels[i])) idx.push_back(i);
    Dataset out{std::move(new_name), {}, gather_labels(idx), split};
    if (!idx.empty()) out.inputs = gather(idx);
    return out;
  }
};

inline Dataset make_dataset(std::string name, std::size_t d_x, std::vector<double> values,
                            std::vector<std::size_t> labels, Split split) {
  if (labels.empty()) throw ValidationError("dataset '" + name + "' is empty");
  Dataset ds{std::move(name), Tensor::matrix(labels.size(), d_x, std::move(values)), std::move(labels), split};
  return ds;
}

/// Reads header-free CSV rows of the form `label,v1,...,v_dx`.
inline Dataset load_dataset(const std::string& path, std::size_t d_x, std::optional<std::size_t> num_classes = {},
                            Split split = Split::train) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    auto fail = [&](const std::string& why) {
      return ParseError(path + ":" + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != d_x + 1) {
      throw fail("expected " + std::to_string(d_x + 1) + " fields, found " + std::to_string(fields.size()));
    }
    std::size_t label = 0;
    {
      const auto f = fields[0];
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), label);
      if (ec != std::errc() || p != f.data() + f.size()) throw fail("label '" + std::string(f) + "' is not a class index");
    }
    if (num_classes && label >= *num_classes) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": label " + std::to_string(label) +
                            " outside [0," + std::to_string(*num_classes) + ")");
    }
    labels.push_back(label);
    for (std::size_t k = 1; k <= d_x; ++k) {
      const auto f = fields[k];
      double v = 0.0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(v)) {
        throw fail("field " + std::to_string(k + 1) + " ('" + std::string(f) + "') is not a finite number");
      }
      values.push_back(v);
    }
  }
  if (labels.empty()) throw ParseError(path + ": no rows");
  return make_dataset(path, d_x, std::move(values), std::move(labels), split);
}

/// Writes the CSV format read by load_dataset, with round-trip exact floats.
inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write dataset file '" + path + "'");
  const std::size_t d = ds.input_dim();
  const auto v = ds.inputs.values();
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (std::size_t k = 0; k < d; ++k) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v[i * d + k]);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    out << '\n';
  }
}

struct SplitDataset {
  Dataset train;
  Dataset test;
  std::size_t num_classes = 0;
  std::vector<std::vector<double>> class_means;
};

/// Isotropic unit-variance Gaussian blobs. Class means are random directions
/// rescaled so the closest pair sits exactly `separation` apart; each class
/// is split 80/20 into train/test.
inline SplitDataset synth_gaussian_tasks(std::size_t n_classes, std::size_t d_x, std::size_t per_class,
                                         double separation, std::uint64_t seed, std::string name = "gaussian") {
  if (n_classes < 2) throw ConfigurationError("synth_gaussian_tasks needs at least 2 classes");
  if (per_class < 2) throw ConfigurationError("synth_gaussian_tasks needs at least 2 samples per class");
  if (d_x == 0) throw ConfigurationError("synth_gaussian_tasks needs d_x >= 1");
  Rng rng(seed);
  std::vector<std::vector<double>> means(n_classes, std::vector<double>(d_x));
  for (auto& m : means)
    for (auto& x : m) x = rng.normal();
  double closest = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < n_classes; ++a)
    for (std::size_t b = a + 1; b < n_classes; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < d_x; ++k) s += (means[a][k] - means[b][k]) * (means[a][k] - means[b][k]);
      closest = std::min(closest, std::sqrt(s));
    }
  const double factor = separation / closest;
  for (auto& m : means)
    for (auto& x : m) x *= factor;

  const std::size_t n_train = std::max<std::size_t>(1, (per_class * 4) / 5);
  std::vector<double> train_v, test_v;
  std::vector<std::size_t> train_y, test_y;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<std::vector<double>> samples(per_class, std::vector<double>(d_x));
    for (auto& s : samples)
      for (std::size_t k = 0; k < d_x; ++k) s[k] = means[c][k] + rng.normal();
    std::vector<std::size_t> order(per_class);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    for (std::size_t r = 0; r < per_class; ++r) {
      auto& dst_v = r < n_train ? train_v : test_v;
      auto& dst_y = r < n_train ? train_y : test_y;
      dst_v.insert(dst_v.end(), samples[order[r]].begin(), samples[order[r]].end());
      dst_y.push_back(c);
    }
  }
  SplitDataset out;
  out.train = make_dataset(name + "/train", d_x, std::move(train_v), std::move(train_y), Split::train);
  out.test = make_dataset(name + "/test", d_x, std::move(test_v), std::move(test_y), Split::test);
  out.num_classes = n_classes;
  out.class_means = std::move(means);
  return out;
}

}  // namespace scdem
