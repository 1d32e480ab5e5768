#include "mto/dataset.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

namespace mto::data {

const std::array<const char*, 10>& NormalizationSpec::names() {
  static const std::array<const char*, 10> n = {"a",   "b",   "m",     "n1", "n2",
                                                "n3",  "c00", "c11",   "gamma", "vf"};
  return n;
}

std::array<double, 10> NormalizationSpec::raw(const Record& r) {
  return {r.shape.a, r.shape.b, r.shape.m, r.shape.n1, r.shape.n2,
          r.shape.n3, r.c00,    r.c11,     r.gamma,    r.vf};
}

Record NormalizationSpec::from_raw(const std::array<double, 10>& v) {
  Record r;
  r.shape = {v[0], v[1], v[2], v[3], v[4], v[5]};
  r.c00 = v[6];
  r.c11 = v[7];
  r.gamma = v[8];
  r.vf = v[9];
  return r;
}

NormalizationSpec NormalizationSpec::fit(const std::vector<Record>& recs) {
  require(!recs.empty(), ErrorKind::Config, "normalization: empty record set");
  NormalizationSpec spec;
  spec.fields[6].log10 = true;  // c00
  spec.fields[7].log10 = true;  // c11
  for (int f = 0; f < 10; ++f) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Record& r : recs) {
      double v = raw(r)[static_cast<std::size_t>(f)];
      if (spec.fields[static_cast<std::size_t>(f)].log10) {
        require(v > 0, ErrorKind::Numeric, "normalization: log field must be positive");
        v = std::log10(v);
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    spec.fields[static_cast<std::size_t>(f)].lo = lo;
    spec.fields[static_cast<std::size_t>(f)].hi = hi;
  }
  return spec;
}

std::array<double, 10> NormalizationSpec::normalize_one(const Record& r) const {
  std::array<double, 10> out{};
  auto v = raw(r);
  for (int f = 0; f < 10; ++f) {
    const FieldNorm& fn = fields[static_cast<std::size_t>(f)];
    double x = v[static_cast<std::size_t>(f)];
    if (fn.log10) {
      require(x > 0, ErrorKind::Numeric, "normalization: log field must be positive");
      x = std::log10(x);
    }
    double span = fn.hi - fn.lo;
    out[static_cast<std::size_t>(f)] = span < 1e-300 ? 0.5 : (x - fn.lo) / span;
  }
  return out;
}

Eigen::MatrixXd NormalizationSpec::normalize(const std::vector<Record>& recs) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(recs.size()), 10);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto row = normalize_one(recs[i]);
    for (int f = 0; f < 10; ++f) out(static_cast<Eigen::Index>(i), f) = row[static_cast<std::size_t>(f)];
  }
  return out;
}

Record NormalizationSpec::denormalize_row(const Eigen::VectorXd& row) const {
  require(row.size() == 10, ErrorKind::Config, "denormalize: row must have 10 fields");
  std::array<double, 10> v{};
  for (int f = 0; f < 10; ++f) {
    const FieldNorm& fn = fields[static_cast<std::size_t>(f)];
    double x = fn.lo + row[f] * (fn.hi - fn.lo);
    v[static_cast<std::size_t>(f)] = fn.log10 ? std::pow(10.0, x) : x;
  }
  return from_raw(v);
}

namespace {
geom::SuperShapeParams draw_params(Rng& rng) {
  const auto& box = geom::kSamplingBox;
  geom::SuperShapeParams p;
  p.a = rng.uniform(box.a_lo, box.a_hi);
  p.b = rng.uniform(box.b_lo, box.b_hi);
  p.m = rng.uniform(box.m_lo, box.m_hi);
  p.n1 = rng.uniform(box.n_lo, box.n_hi);
  p.n2 = rng.uniform(box.n_lo, box.n_hi);
  p.n3 = rng.uniform(box.n_lo, box.n_hi);
  return p;
}
}  // namespace

std::vector<geom::SuperShapeParams> sample_params(int count, std::uint64_t seed) {
  require(count >= 1, ErrorKind::Config, "sample: count must be positive");
  std::vector<geom::SuperShapeParams> out;
  out.reserve(static_cast<std::size_t>(count));
  Rng rng(seed);
  for (int i = 0; i < count; ++i) out.push_back(draw_params(rng));
  return out;
}

Record build_record(const geom::SuperShapeParams& p, int resolution, int boundary_points,
                    const micro::HomogenizeOptions& homog) {
  geom::BoundaryPolygon poly = geom::boundary_in_cell(p, boundary_points);
  geom::ShapeMeasures ms = geom::measure(poly);
  if (ms.solid_area <= 0.0)
    throw geom::DegenerateShape("build_record: clipped shape has no area");
  geom::IndicatorGrid grid = geom::rasterize(poly, resolution);
  if (grid.solid_fraction() <= 0.0)
    throw geom::DegenerateShape("build_record: shape is thinner than the sampling grid");
  Record r;
  r.shape = p;
  r.gamma = ms.wetted_perimeter;
  r.vf = 1.0 - ms.solid_area;  // fluid fraction: the flow volume is what gets constrained
  micro::CellPermeability perm = micro::homogenize_cell(grid, homog);
  r.c00 = perm.c00;
  r.c11 = perm.c11;
  return r;
}

namespace {
std::string checkpoint_header(const GenerateOptions& opts) {
  std::ostringstream os;
  os << "# gen checkpoint count=" << opts.count << " seed=" << opts.seed
     << " res=" << opts.resolution << " bp=" << opts.boundary_points
     << " alpha=" << opts.homog.alpha_solid;
  return os.str();
}

std::map<int, std::pair<Record, long>> load_checkpoint(const std::string& path,
                                                       const std::string& header, int count) {
  std::map<int, std::pair<Record, long>> known;
  std::ifstream in(path);
  if (!in) return known;
  std::string line;
  if (!std::getline(in, line) || line != header) return {};  // settings changed: start over
  while (std::getline(in, line)) {
    int i = 0;
    long rej = 0;
    Record r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%ld", &i,
                    &r.shape.a, &r.shape.b, &r.shape.m, &r.shape.n1, &r.shape.n2, &r.shape.n3,
                    &r.c00, &r.c11, &r.gamma, &r.vf, &rej) != 12)
      continue;  // torn tail line from an interrupted append
    if (i < 0 || i >= count) continue;
    known[i] = {r, rej};
  }
  return known;
}

void append_checkpoint(std::ofstream& out, int i, const Record& r, long rejected) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%ld", i,
                r.shape.a, r.shape.b, r.shape.m, r.shape.n1, r.shape.n2, r.shape.n3, r.c00,
                r.c11, r.gamma, r.vf, rejected);
  out << buf << '\n' << std::flush;
}
}  // namespace

Dataset generate(const GenerateOptions& opts,
                 const std::function<void(int done, int total)>& progress) {
  require(opts.count >= 1, ErrorKind::Config, "generate: count must be positive");
  require(opts.resolution >= 2, ErrorKind::Config, "generate: resolution must be at least 2");
  require(opts.boundary_points >= 3, ErrorKind::Config, "generate: need at least 3 boundary points");

  Dataset ds;
  ds.opts = opts;
  ds.records.resize(static_cast<std::size_t>(opts.count));
  std::atomic<long> rejected{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;

  std::map<int, std::pair<Record, long>> known;  // read-only during the sweep
  std::ofstream ck_out;
  std::mutex ck_mutex;
  if (!opts.checkpoint.empty()) {
    std::string header = checkpoint_header(opts);
    known = load_checkpoint(opts.checkpoint, header, opts.count);
    ck_out.open(opts.checkpoint, known.empty() ? std::ios::trunc : std::ios::app);
    if (ck_out && known.empty()) ck_out << header << '\n' << std::flush;
  }

  parallel_for(static_cast<std::size_t>(opts.count), opts.workers, [&](std::size_t i) {
    if (auto it = known.find(static_cast<int>(i)); it != known.end()) {
      ds.records[i] = it->second.first;
      rejected.fetch_add(it->second.second, std::memory_order_relaxed);
    } else {
      Rng rng(Rng::derive(opts.seed, i));
      long rej_here = 0;
      for (int attempt = 0;; ++attempt) {
        require(attempt < 1000, ErrorKind::Numeric,
                "generate: excessive rejection rate, sampling box looks degenerate");
        geom::SuperShapeParams p = draw_params(rng);
        try {
          ds.records[i] = build_record(p, opts.resolution, opts.boundary_points, opts.homog);
          break;
        } catch (const geom::DegenerateShape&) {
          ++rej_here;
        }
      }
      rejected.fetch_add(rej_here, std::memory_order_relaxed);
      if (ck_out) {
        std::lock_guard<std::mutex> lock(ck_mutex);
        append_checkpoint(ck_out, static_cast<int>(i), ds.records[i], rej_here);
      }
    }
    int d = done.fetch_add(1, std::memory_order_relaxed) + 1;
    if (progress && (d % 25 == 0 || d == opts.count)) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      progress(d, opts.count);
    }
  });

  ds.rejected = rejected.load();
  ds.norm = NormalizationSpec::fit(ds.records);
  return ds;
}

namespace {
nlohmann::json norm_to_json(const NormalizationSpec& spec) {
  nlohmann::json arr = nlohmann::json::array();
  for (int f = 0; f < 10; ++f) {
    const FieldNorm& fn = spec.fields[static_cast<std::size_t>(f)];
    arr.push_back({{"name", NormalizationSpec::names()[static_cast<std::size_t>(f)]},
                   {"lo", fn.lo},
                   {"hi", fn.hi},
                   {"log10", fn.log10}});
  }
  return arr;
}

NormalizationSpec norm_from_json(const nlohmann::json& arr) {
  require(arr.is_array() && arr.size() == 10, ErrorKind::Io,
          "dataset meta: normalization must list 10 fields");
  NormalizationSpec spec;
  for (int f = 0; f < 10; ++f) {
    const auto& j = arr[static_cast<std::size_t>(f)];
    require(j.at("name").get<std::string>() ==
                NormalizationSpec::names()[static_cast<std::size_t>(f)],
            ErrorKind::Io, "dataset meta: unexpected field order");
    spec.fields[static_cast<std::size_t>(f)] = {j.at("lo").get<double>(),
                                                j.at("hi").get<double>(),
                                                j.at("log10").get<bool>()};
  }
  return spec;
}
}  // namespace

nlohmann::json norm_spec_to_json(const NormalizationSpec& spec) { return norm_to_json(spec); }
NormalizationSpec norm_spec_from_json(const nlohmann::json& j) { return norm_from_json(j); }

void save_dataset(const Dataset& ds, const std::string& csv_path) {
  std::ofstream f(csv_path);
  if (!f) fail_io("dataset: cannot open '" + csv_path + "' for writing");
  const auto& names = NormalizationSpec::names();
  for (int c = 0; c < 10; ++c) f << (c ? "," : "") << names[static_cast<std::size_t>(c)];
  f << '\n';
  for (const Record& r : ds.records) {
    auto v = NormalizationSpec::raw(r);
    for (int c = 0; c < 10; ++c) f << (c ? "," : "") << format_double(v[static_cast<std::size_t>(c)]);
    f << '\n';
  }
  if (!f) fail_io("dataset: write to '" + csv_path + "' failed");
  f.close();

  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["count"] = ds.records.size();
  meta["seed"] = ds.opts.seed;
  meta["resolution"] = ds.opts.resolution;
  meta["boundary_points"] = ds.opts.boundary_points;
  meta["rejected"] = ds.rejected;
  meta["alpha_solid"] = ds.opts.homog.alpha_solid;
  meta["fluid_cap"] = ds.opts.homog.fluid_cap;
  meta["normalization"] = norm_to_json(ds.norm);
  std::ofstream mf(csv_path + ".meta.json");
  if (!mf) fail_io("dataset: cannot open '" + csv_path + ".meta.json' for writing");
  mf << meta.dump(2) << '\n';
  if (!mf) fail_io("dataset: write to meta sidecar failed");
}

Dataset load_dataset(const std::string& csv_path) {
  std::ifstream f(csv_path);
  if (!f) fail_io("dataset: cannot open '" + csv_path + "'");
  Dataset ds;
  std::string line;
  require(static_cast<bool>(std::getline(f, line)), ErrorKind::Io,
          "dataset: '" + csv_path + "' is empty");
  {
    std::string expect;
    const auto& names = NormalizationSpec::names();
    for (int c = 0; c < 10; ++c) expect += std::string(c ? "," : "") + names[static_cast<std::size_t>(c)];
    require(line == expect, ErrorKind::Io, "dataset: unexpected CSV header '" + line + "'");
  }
  long lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<double, 10> v{};
    const char* s = line.c_str();
    char* end = nullptr;
    for (int c = 0; c < 10; ++c) {
      v[static_cast<std::size_t>(c)] = std::strtod(s, &end);
      require(end != s, ErrorKind::Io,
              "dataset: parse error at line " + std::to_string(lineno));
      s = end;
      if (c < 9) {
        require(*s == ',', ErrorKind::Io,
                "dataset: expected 10 comma-separated fields at line " + std::to_string(lineno));
        ++s;
      }
    }
    require(*s == '\0' || *s == '\r', ErrorKind::Io,
            "dataset: trailing garbage at line " + std::to_string(lineno));
    ds.records.push_back(NormalizationSpec::from_raw(v));
  }
  require(!ds.records.empty(), ErrorKind::Io, "dataset: no records in '" + csv_path + "'");

  std::ifstream mf(csv_path + ".meta.json");
  if (!mf) fail_io("dataset: missing sidecar '" + csv_path + ".meta.json'");
  nlohmann::json meta;
  try {
    mf >> meta;
  } catch (const std::exception& e) {
    fail_io(std::string("dataset: bad meta sidecar: ") + e.what());
  }
  require(meta.at("count").get<std::size_t>() == ds.records.size(), ErrorKind::Io,
          "dataset: sidecar count does not match CSV rows");
  ds.norm = norm_from_json(meta.at("normalization"));
  ds.opts.count = static_cast<int>(ds.records.size());
  ds.opts.seed = meta.at("seed").get<std::uint64_t>();
  ds.opts.resolution = meta.at("resolution").get<int>();
  ds.opts.boundary_points = meta.at("boundary_points").get<int>();
  ds.rejected = meta.at("rejected").get<long>();
  ds.opts.homog.alpha_solid = meta.at("alpha_solid").get<double>();
  ds.opts.homog.fluid_cap = meta.at("fluid_cap").get<double>();
  return ds;
}

}  // namespace mto::data
