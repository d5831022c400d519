#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cmg/data.hpp"
#include "cmg/image.hpp"
#include "cmg/networks.hpp"

namespace cmg {

// All full-reference metrics map [-1, 1] images to [0, 1] first (dynamic
// range 1.0) and average per-image scores over the batch.
inline constexpr double kPsnrCapDb = 100.0;
inline constexpr int64_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr int64_t kUqiWindow = 8;
inline constexpr int64_t kVifScales = 4;
inline constexpr int64_t kVifMinSide = 32;

// One square unit-range image, row-major.
struct Plane {
  int64_t side = 0;
  std::vector<double> values;

  double at(int64_t r, int64_t c) const { return values[static_cast<size_t>(r * side + c)]; }
};

// Unit-range planes of every image in the batch.
std::vector<Plane> to_planes(const ImageTensor& img);

double mse(const ImageTensor& a, const ImageTensor& b);
double psnr(const ImageTensor& a, const ImageTensor& b);
double ssim(const ImageTensor& a, const ImageTensor& b);
double uqi(const ImageTensor& a, const ImageTensor& b);
double vif(const ImageTensor& reference, const ImageTensor& distorted);
// LPIPS-style distance over the frozen extractor: per layer, features are
// unit-normalized across channels at every position, squared differences
// are summed over channels and averaged over positions; layers are averaged.
double learned_perceptual_distance(const ImageTensor& a, const ImageTensor& b, FeatureExtractor& f);

// Single-plane kernels.
double mse_plane(const Plane& a, const Plane& b);
double psnr_from_mse(double mse_value);
double ssim_plane(const Plane& a, const Plane& b);
double uqi_plane(const Plane& a, const Plane& b);
double vif_plane(const Plane& reference, const Plane& distorted);

// Normalized 1-D Gaussian taps of odd length.
std::vector<double> gaussian_window(int64_t size, double sigma);

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"ssim", "psnr_db", "mse", "uqi", "vif", "lpd"};
  return names;
}

struct PairScores {
  std::string pair_id;
  std::vector<double> values;  // ordered as metric_names()
};

struct MetricRow {
  std::string model;
  std::string metric;
  double value = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::string dataset_id;
  std::string checkpoint_id;
  std::string timestamp;

  // Value for (model, metric); throws std::out_of_range when absent.
  double value(const std::string& model, const std::string& metric) const;
  std::vector<std::string> models() const;
};

struct ValidationEvaluation {
  MetricReport report;
  std::vector<PairScores> per_pair;
};

// Translates every validation input with `g`, scores it against the withheld
// truth on all six metrics and reports per-metric means. Throws DatasetEmpty.
ValidationEvaluation evaluate_on_validation(Generator& g, const PairedValidationSet& val,
                                            FeatureExtractor& f, const std::string& model_name);

// Table-style CSV, header model,ssim,psnr_db,mse,uqi,vif,lpd; one row per model.
std::string report_csv(const MetricReport& report);
void write_report_csv(const std::filesystem::path& path, const MetricReport& report);
MetricReport read_report_csv(const std::filesystem::path& path);
MetricReport merge_reports(const std::vector<MetricReport>& reports);

}  // namespace cmg
