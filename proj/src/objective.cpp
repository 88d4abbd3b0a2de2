#include "depthnet/objective.hpp"

#include <iomanip>
#include <sstream>

namespace depthnet {

std::string MetricReport::to_kv_text() const {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "abs_rel=" << abs_rel << "\n"
     << "rmse=" << rmse << "\n"
     << "log10=" << log10 << "\n"
     << "sq_rel=" << sq_rel << "\n"
     << "delta1=" << delta1 << "\n"
     << "delta2=" << delta2 << "\n"
     << "delta3=" << delta3 << "\n"
     << "n_valid=" << n_valid << "\n";
  return os.str();
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ValueError("average_reports over an empty list");
  MetricReport out;
  for (const auto& r : reports) {
    out.abs_rel += r.abs_rel;
    out.rmse += r.rmse;
    out.log10 += r.log10;
    out.sq_rel += r.sq_rel;
    out.delta1 += r.delta1;
    out.delta2 += r.delta2;
    out.delta3 += r.delta3;
    out.n_valid += r.n_valid;
  }
  const double k = double(reports.size());
  out.abs_rel /= k;
  out.rmse /= k;
  out.log10 /= k;
  out.sq_rel /= k;
  out.delta1 /= k;
  out.delta2 /= k;
  out.delta3 /= k;
  return out;
}

}  // namespace depthnet
