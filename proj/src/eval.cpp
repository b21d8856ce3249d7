#include "mcnet/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mcnet/image_io.hpp"
#include "mcnet/metrics.hpp"

namespace mcnet::cli {
namespace fs = std::filesystem;

namespace {

std::string printf_string(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

PreparedSet load_prepared(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw std::runtime_error("no manifest.txt in " + dir.string());
  PreparedSet set;
  std::map<std::string, std::string> op;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "image") {
      PreparedImage img;
      int h = 0, w = 0;
      if (!(ls >> img.name >> h >> w)) {
        throw std::runtime_error("manifest.txt:" + std::to_string(lineno) + ": bad image line");
      }
      img.hr = load_tensor(dir / "hr" / (img.name + ".mcnt"));
      img.b = load_tensor(dir / "lr" / (img.name + ".mcnt"));
      img.w = load_tensor(dir / "w" / (img.name + ".mcnt"));
      if (img.hr.height() != h || img.hr.width() != w || !img.w.same_shape(img.hr)) {
        throw std::runtime_error("prepared image " + img.name + " has inconsistent shapes");
      }
      set.images.push_back(std::move(img));
    } else if (key == "seed") {
      ls >> set.seed;
    } else {
      std::string value;
      ls >> value;
      op[key] = value;
    }
  }
  set.spec = measurement::OperatorSpec::from_config(op);
  return set;
}

std::string prepared_manifest(const PreparedSet& set) {
  std::ostringstream os;
  os << "# mcnet prepared dataset\n";
  for (const auto& [k, v] : set.spec.to_config()) os << k << ' ' << v << '\n';
  os << "seed " << set.seed << '\n';
  for (const PreparedImage& img : set.images) {
    os << "image " << img.name << ' ' << img.hr.height() << ' ' << img.hr.width() << '\n';
  }
  return os.str();
}

measurement::MeasurementModel prepared_model(const measurement::OperatorSpec& spec,
                                             const PreparedImage& image) {
  return measurement::MeasurementModel(spec.build(), image.b, spec.epsilon, image.hr.height(),
                                       image.hr.width());
}

EvalRow EvalRow::from_scores(std::string method, int scale, std::vector<ImageScore> images) {
  EvalRow row;
  row.method = std::move(method);
  row.scale = scale;
  for (const ImageScore& s : images) {
    row.psnr += s.psnr;
    row.ssim += s.ssim;
    row.fidelity += s.fidelity;
    row.converged = row.converged && s.converged;
  }
  if (!images.empty()) {
    const double n = static_cast<double>(images.size());
    row.psnr /= n;
    row.ssim /= n;
    row.fidelity /= n;
  }
  row.images = std::move(images);
  return row;
}

ImageScore score_image(const std::string& name, const ImageTensor& hr, const ImageTensor& x,
                       const measurement::MeasurementModel& model, int shave) {
  ImageScore s;
  s.name = name;
  s.psnr = psnr(hr, x, shave);
  s.ssim = ssim(hr, x, shave);
  s.fidelity = model.residual_norm(x);
  return s;
}

std::string format_psnr(double v) { return printf_string("%.4f", v); }
std::string format_ssim(double v) { return printf_string("%.4f", v); }
std::string format_fidelity(double v) { return printf_string("%.4e", v); }

std::string format_table(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %5s %10s %8s %12s %6s %9s\n", "method", "scale",
                "PSNR(dB)", "SSIM", "fidelity", "images", "converged");
  os << buf;
  for (const EvalRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %5d %10s %8s %12s %6zu %9s\n", r.method.c_str(),
                  r.scale, format_psnr(r.psnr).c_str(), format_ssim(r.ssim).c_str(),
                  format_fidelity(r.fidelity).c_str(), r.images.size(),
                  r.converged ? "yes" : "no");
    os << buf;
  }
  return os.str();
}

std::string format_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "method,scale,psnr,ssim,fidelity,images,converged\n";
  for (const EvalRow& r : rows) {
    os << r.method << ',' << r.scale << ',' << format_psnr(r.psnr) << ','
       << format_ssim(r.ssim) << ',' << format_fidelity(r.fidelity) << ',' << r.images.size()
       << ',' << (r.converged ? "yes" : "no") << '\n';
  }
  return os.str();
}

std::string format_image_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "method,scale,image,psnr,ssim,fidelity,iterations,converged\n";
  for (const EvalRow& r : rows) {
    for (const ImageScore& s : r.images) {
      os << r.method << ',' << r.scale << ',' << s.name << ',' << format_psnr(s.psnr) << ','
         << format_ssim(s.ssim) << ',' << format_fidelity(s.fidelity) << ',' << s.iterations
         << ',' << (s.converged ? "yes" : "no") << '\n';
    }
  }
  return os.str();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mcnet::cli
