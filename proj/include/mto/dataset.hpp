#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "mto/geometry.hpp"
#include "mto/microfluid.hpp"

// Microstructure training data: supershape parameters paired with their
// homogenized permeability, contact (wetted) perimeter and solid fraction.
// One record is one row of the canonical 10-field layout
//   a, b, m, n1, n2, n3, c00, c11, gamma, vf
// which is also the autoencoder's input and output order.
namespace mto::data {

struct Record {
  geom::SuperShapeParams shape;
  double c00 = 0, c11 = 0;
  double gamma = 0;  // wetted perimeter, unit-cell units
  double vf = 0;     // fluid volume fraction; solid fraction is 1 - vf
};

struct FieldNorm {
  double lo = 0, hi = 1;
  bool log10 = false;
};

// Min-max scaling per field; permeabilities are scaled in log10 because
// they span orders of magnitude. Fitted on a training set and persisted
// alongside the data and any model trained on it.
struct NormalizationSpec {
  std::array<FieldNorm, 10> fields{};

  static const std::array<const char*, 10>& names();
  static std::array<double, 10> raw(const Record& r);
  static Record from_raw(const std::array<double, 10>& v);

  static NormalizationSpec fit(const std::vector<Record>& recs);
  Eigen::MatrixXd normalize(const std::vector<Record>& recs) const;  // N x 10
  std::array<double, 10> normalize_one(const Record& r) const;
  Record denormalize_row(const Eigen::VectorXd& row) const;
};

struct GenerateOptions {
  int count = 1000;
  std::uint64_t seed = 7;
  int resolution = 64;       // homogenization pixels per cell side
  int boundary_points = 1000;
  int workers = 1;
  micro::HomogenizeOptions homog{};
  // optional per-record checkpoint file: generation interrupted and rerun with
  // the same settings resumes where it stopped (records are index-independent)
  std::string checkpoint;
};

struct Dataset {
  std::vector<Record> records;
  NormalizationSpec norm;
  GenerateOptions opts;
  long rejected = 0;  // degenerate parameter draws replaced during generation
};

// Uniform draws from the supershape sampling box, one stream, fixed order.
std::vector<geom::SuperShapeParams> sample_params(int count, std::uint64_t seed);

// Geometry + homogenization for one parameter set. Throws
// geom::DegenerateShape when the curve is unusable.
Record build_record(const geom::SuperShapeParams& p, int resolution, int boundary_points,
                    const micro::HomogenizeOptions& homog = {});

// Parallel map over per-index substreams: results do not depend on worker
// count, and a rejected draw only advances its own stream.
Dataset generate(const GenerateOptions& opts,
                 const std::function<void(int done, int total)>& progress = {});

// CSV with exact round-trip formatting plus a .meta.json sidecar carrying
// the normalization and generation provenance.
void save_dataset(const Dataset& ds, const std::string& csv_path);
Dataset load_dataset(const std::string& csv_path);

nlohmann::json norm_spec_to_json(const NormalizationSpec& spec);
NormalizationSpec norm_spec_from_json(const nlohmann::json& j);

}  // namespace mto::data
