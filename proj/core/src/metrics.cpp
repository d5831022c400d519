#include "cmg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "cmg/errors.hpp"

namespace cmg {
namespace {

// Square separable correlation keeping only fully covered positions.
Plane filter_valid(const Plane& p, const std::vector<double>& taps) {
  const auto n = static_cast<int64_t>(taps.size());
  const int64_t out_side = p.side - n + 1;
  Plane rows{out_side, std::vector<double>(static_cast<size_t>(p.side * out_side))};
  // rows: p.side rows x out_side cols
  for (int64_t r = 0; r < p.side; ++r) {
    for (int64_t c = 0; c < out_side; ++c) {
      double acc = 0.0;
      for (int64_t k = 0; k < n; ++k) acc += taps[static_cast<size_t>(k)] * p.at(r, c + k);
      rows.values[static_cast<size_t>(r * out_side + c)] = acc;
    }
  }
  Plane out{out_side, std::vector<double>(static_cast<size_t>(out_side * out_side))};
  for (int64_t r = 0; r < out_side; ++r) {
    for (int64_t c = 0; c < out_side; ++c) {
      double acc = 0.0;
      for (int64_t k = 0; k < n; ++k) {
        acc += taps[static_cast<size_t>(k)] * rows.values[static_cast<size_t>((r + k) * out_side + c)];
      }
      out.values[static_cast<size_t>(r * out_side + c)] = acc;
    }
  }
  return out;
}

Plane multiply(const Plane& a, const Plane& b) {
  Plane out{a.side, std::vector<double>(a.values.size())};
  for (size_t i = 0; i < a.values.size(); ++i) out.values[i] = a.values[i] * b.values[i];
  return out;
}

Plane scaled(const Plane& p, double factor) {
  Plane out = p;
  for (double& v : out.values) v *= factor;
  return out;
}

// Same-size version with mirrored borders, used before each decimation so that
// small images keep enough support for all scales.
Plane filter_reflect(const Plane& p, const std::vector<double>& taps) {
  const auto n = static_cast<int64_t>(taps.size());
  const int64_t half = n / 2;
  const int64_t side = p.side;
  auto mirror = [side](int64_t i) {
    while (i < 0 || i >= side) i = i < 0 ? -i - 1 : 2 * side - i - 1;
    return i;
  };
  Plane rows{side, std::vector<double>(p.values.size())};
  for (int64_t r = 0; r < side; ++r) {
    for (int64_t c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int64_t k = 0; k < n; ++k) acc += taps[static_cast<size_t>(k)] * p.at(r, mirror(c + k - half));
      rows.values[static_cast<size_t>(r * side + c)] = acc;
    }
  }
  Plane out{side, std::vector<double>(p.values.size())};
  for (int64_t r = 0; r < side; ++r) {
    for (int64_t c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int64_t k = 0; k < n; ++k) acc += taps[static_cast<size_t>(k)] * rows.at(mirror(r + k - half), c);
      out.values[static_cast<size_t>(r * side + c)] = acc;
    }
  }
  return out;
}

Plane decimate(const Plane& p) {
  const int64_t side = (p.side + 1) / 2;
  Plane out{side, std::vector<double>(static_cast<size_t>(side * side))};
  for (int64_t r = 0; r < side; ++r) {
    for (int64_t c = 0; c < side; ++c) out.values[static_cast<size_t>(r * side + c)] = p.at(2 * r, 2 * c);
  }
  return out;
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(what) + ": image shapes differ");
}

template <typename Fn>
double batch_mean(const ImageTensor& a, const ImageTensor& b, Fn&& fn) {
  const auto pa = to_planes(a);
  const auto pb = to_planes(b);
  double sum = 0.0;
  for (size_t i = 0; i < pa.size(); ++i) sum += fn(pa[i], pb[i]);
  return pa.empty() ? 0.0 : sum / static_cast<double>(pa.size());
}

std::string format_value(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

std::vector<Plane> to_planes(const ImageTensor& img) {
  const auto t = to_unit_range(img.tensor().detach().to(torch::kDouble)).contiguous();
  const int64_t b = t.size(0);
  const int64_t side = t.size(2);
  std::vector<Plane> planes;
  planes.reserve(static_cast<size_t>(b));
  const double* data = t.data_ptr<double>();
  for (int64_t i = 0; i < b; ++i) {
    const double* start = data + i * side * side;
    planes.push_back(Plane{side, std::vector<double>(start, start + side * side)});
  }
  return planes;
}

std::vector<double> gaussian_window(int64_t size, double sigma) {
  std::vector<double> taps(static_cast<size_t>(size));
  const double center = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (int64_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - center;
    taps[static_cast<size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += taps[static_cast<size_t>(i)];
  }
  for (double& t : taps) t /= total;
  return taps;
}

double mse_plane(const Plane& a, const Plane& b) {
  double sum = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.values.size());
}

double psnr_from_mse(double mse_value) {
  if (mse_value < 1e-12) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse_value));
}

double ssim_plane(const Plane& a, const Plane& b) {
  if (a.side < kSsimWindow) {
    throw WindowError("SSIM needs images of at least " + std::to_string(kSsimWindow) + "x" +
                      std::to_string(kSsimWindow));
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto taps = gaussian_window(kSsimWindow, kSsimSigma);
  const Plane mu_a = filter_valid(a, taps);
  const Plane mu_b = filter_valid(b, taps);
  const Plane aa = filter_valid(multiply(a, a), taps);
  const Plane bb = filter_valid(multiply(b, b), taps);
  const Plane ab = filter_valid(multiply(a, b), taps);
  double sum = 0.0;
  for (size_t i = 0; i < mu_a.values.size(); ++i) {
    const double ma = mu_a.values[i];
    const double mb = mu_b.values[i];
    const double va = aa.values[i] - ma * ma;
    const double vb = bb.values[i] - mb * mb;
    const double cov = ab.values[i] - ma * mb;
    sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.values.size());
}

double uqi_plane(const Plane& a, const Plane& b) {
  if (a.side < kUqiWindow) {
    throw WindowError("UQI needs images of at least " + std::to_string(kUqiWindow) + "x" +
                      std::to_string(kUqiWindow));
  }
  // Variances below this are treated as exact zeros (8-bit data cannot
  // produce a non-zero window variance smaller than ~1e-7).
  constexpr double kDegenerate = 1e-12;
  const std::vector<double> box(static_cast<size_t>(kUqiWindow), 1.0 / static_cast<double>(kUqiWindow));
  Plane diff_sq = multiply(a, b);
  for (size_t i = 0; i < diff_sq.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    diff_sq.values[i] = d * d;
  }
  const Plane mu_a = filter_valid(a, box);
  const Plane mu_b = filter_valid(b, box);
  const Plane aa = filter_valid(multiply(a, a), box);
  const Plane bb = filter_valid(multiply(b, b), box);
  const Plane ab = filter_valid(multiply(a, b), box);
  const Plane mismatch = filter_valid(diff_sq, box);
  double sum = 0.0;
  int64_t counted = 0;
  for (size_t i = 0; i < mu_a.values.size(); ++i) {
    if (mismatch.values[i] == 0.0) {
      sum += 1.0;
      ++counted;
      continue;
    }
    const double ma = mu_a.values[i];
    const double mb = mu_b.values[i];
    const double va = std::max(0.0, aa.values[i] - ma * ma);
    const double vb = std::max(0.0, bb.values[i] - mb * mb);
    const double cov = ab.values[i] - ma * mb;
    const double var_sum = va + vb;
    const double mean_sq = ma * ma + mb * mb;
    if (var_sum <= kDegenerate || mean_sq <= kDegenerate) continue;
    sum += 4.0 * cov * ma * mb / (var_sum * mean_sq);
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

double vif_plane(const Plane& reference, const Plane& distorted) {
  if (reference.side < kVifMinSide) {
    throw ScaleError("VIF needs images of at least " + std::to_string(kVifMinSide) + "x" +
                     std::to_string(kVifMinSide) + " for 4 scales");
  }
  constexpr double sigma_nsq = 2.0;
  constexpr double eps = 1e-10;
  // Noise variance is defined on the 8-bit scale.
  Plane ref = scaled(reference, 255.0);
  Plane dist = scaled(distorted, 255.0);
  double num = 0.0;
  double den = 0.0;
  for (int64_t scale = 1; scale <= kVifScales; ++scale) {
    const int64_t n = (int64_t{1} << (kVifScales - scale + 1)) + 1;
    const auto taps = gaussian_window(n, static_cast<double>(n) / 5.0);
    if (scale > 1) {
      ref = decimate(filter_reflect(ref, taps));
      dist = decimate(filter_reflect(dist, taps));
    }
    if (ref.side < n) throw ScaleError("image too small at VIF scale " + std::to_string(scale));
    const Plane mu1 = filter_valid(ref, taps);
    const Plane mu2 = filter_valid(dist, taps);
    const Plane e11 = filter_valid(multiply(ref, ref), taps);
    const Plane e22 = filter_valid(multiply(dist, dist), taps);
    const Plane e12 = filter_valid(multiply(ref, dist), taps);
    for (size_t i = 0; i < mu1.values.size(); ++i) {
      double s1 = std::max(0.0, e11.values[i] - mu1.values[i] * mu1.values[i]);
      double s2 = std::max(0.0, e22.values[i] - mu2.values[i] * mu2.values[i]);
      const double s12 = e12.values[i] - mu1.values[i] * mu2.values[i];
      double g = s12 / (s1 + eps);
      double sv = s2 - g * s12;
      if (s1 < eps) {
        g = 0.0;
        sv = s2;
        s1 = 0.0;
      }
      if (s2 < eps) {
        g = 0.0;
        sv = 0.0;
      }
      if (g < 0.0) {
        sv = s2;
        g = 0.0;
      }
      sv = std::max(sv, eps);
      num += std::log10(1.0 + g * g * s1 / (sv + sigma_nsq));
      den += std::log10(1.0 + s1 / sigma_nsq);
    }
  }
  if (den <= 0.0) {
    // Featureless reference: no information to preserve.
    return reference.values == distorted.values ? 1.0 : 0.0;
  }
  return num / den;
}

double mse(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "mse");
  return batch_mean(a, b, mse_plane);
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "psnr");
  return batch_mean(a, b, [](const Plane& x, const Plane& y) { return psnr_from_mse(mse_plane(x, y)); });
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "ssim");
  return batch_mean(a, b, ssim_plane);
}

double uqi(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "uqi");
  return batch_mean(a, b, uqi_plane);
}

double vif(const ImageTensor& reference, const ImageTensor& distorted) {
  require_same_shape(reference, distorted, "vif");
  return batch_mean(reference, distorted, vif_plane);
}

double learned_perceptual_distance(const ImageTensor& a, const ImageTensor& b, FeatureExtractor& f) {
  require_same_shape(a, b, "learned_perceptual_distance");
  torch::NoGradGuard no_grad;
  const auto dtype = f->parameters().front().scalar_type();
  const auto fa = extract_features(f, a.tensor().to(dtype));
  const auto fb = extract_features(f, b.tensor().to(dtype));
  auto unit = [](const torch::Tensor& t) {
    return t / (t.pow(2).sum(1, /*keepdim=*/true).sqrt() + 1e-10);
  };
  double total = 0.0;
  for (size_t i = 0; i < fa.size(); ++i) {
    const auto d = (unit(fa.maps[i]) - unit(fb.maps[i])).pow(2).sum(1);
    total += d.mean().item<double>();
  }
  return fa.size() == 0 ? 0.0 : total / static_cast<double>(fa.size());
}

double MetricReport::value(const std::string& model, const std::string& metric) const {
  for (const auto& row : rows) {
    if (row.model == model && row.metric == metric) return row.value;
  }
  throw std::out_of_range("no value for " + model + "/" + metric);
}

std::vector<std::string> MetricReport::models() const {
  std::vector<std::string> out;
  for (const auto& row : rows) {
    if (std::find(out.begin(), out.end(), row.model) == out.end()) out.push_back(row.model);
  }
  return out;
}

ValidationEvaluation evaluate_on_validation(Generator& g, const PairedValidationSet& val,
                                            FeatureExtractor& f, const std::string& model_name) {
  if (val.empty()) throw DatasetEmpty("validation set is empty");
  ValidationEvaluation result;
  const auto& names = metric_names();
  std::vector<double> sums(names.size(), 0.0);
  for (const auto& pair : val.pairs()) {
    const ImageTensor translated = generator_forward(g, pair.x);
    const auto pt = to_planes(translated).front();
    const auto py = to_planes(pair.y_truth).front();
    const double m = mse_plane(pt, py);
    PairScores scores{pair.pair_id,
                      {ssim_plane(pt, py), psnr_from_mse(m), m, uqi_plane(pt, py), vif_plane(py, pt),
                       learned_perceptual_distance(translated, pair.y_truth, f)}};
    for (size_t k = 0; k < names.size(); ++k) sums[k] += scores.values[k];
    result.per_pair.push_back(std::move(scores));
  }
  for (size_t k = 0; k < names.size(); ++k) {
    result.report.rows.push_back({model_name, names[k], sums[k] / static_cast<double>(val.size())});
  }
  return result;
}

std::string report_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "model";
  for (const auto& name : metric_names()) os << ',' << name;
  os << '\n';
  for (const auto& model : report.models()) {
    os << model;
    for (const auto& name : metric_names()) os << ',' << format_value(report.value(model, name));
    os << '\n';
  }
  return os.str();
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path);
  out << report_csv(report);
  if (!out) throw IoError("failed writing " + path.string());
}

MetricReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty report " + path.string());
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header.front() != "model") {
    throw IoError("unexpected report header in " + path.string());
  }
  MetricReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw IoError("malformed report row in " + path.string());
    for (size_t k = 1; k < cells.size(); ++k) {
      report.rows.push_back({cells[0], header[k], std::stod(cells[k])});
    }
  }
  return report;
}

MetricReport merge_reports(const std::vector<MetricReport>& reports) {
  MetricReport merged;
  std::set<std::string> seen;
  for (const auto& r : reports) {
    for (const auto& model : r.models()) {
      if (!seen.insert(model).second) throw ConfigError("duplicate model name in reports: " + model);
    }
    merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
  }
  return merged;
}

}  // namespace cmg
