#include "iuq/simulator.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "iuq/common.hpp"
#include "iuq/dataio.hpp"

namespace iuq::sim {

TabulatedSimulator::TabulatedSimulator(const std::string& path, int r, int p,
                                       int m) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open simulator table " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty table");
  const auto header = io::split_csv_line(line);
  const std::size_t want = static_cast<std::size_t>(1 + r + p + m);
  if (header.size() != want)
    throw DataError(path + ": expected " + std::to_string(want) +
                    " columns (test_id,x*,theta*,y*), found " +
                    std::to_string(header.size()));

  std::vector<std::vector<double>> in_rows, out_rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const auto cells = io::split_csv_line(line);
    const std::string ctx = path + ":" + std::to_string(lineno);
    if (cells.size() != want)
      throw DataError(ctx + ": wrong cell count");
    std::vector<double> xin, yout;
    for (int k = 0; k < r + p; ++k)
      xin.push_back(io::parse_double(cells[static_cast<std::size_t>(1 + k)], ctx));
    for (int q = 0; q < m; ++q)
      yout.push_back(io::parse_double(
          cells[static_cast<std::size_t>(1 + r + p + q)], ctx));
    in_rows.push_back(std::move(xin));
    out_rows.push_back(std::move(yout));
  }
  if (in_rows.empty()) throw DataError(path + ": no data rows");

  inputs_.resize(static_cast<Eigen::Index>(in_rows.size()), r + p);
  outputs_.resize(static_cast<Eigen::Index>(out_rows.size()), m);
  for (std::size_t i = 0; i < in_rows.size(); ++i) {
    for (int k = 0; k < r + p; ++k)
      inputs_(static_cast<Eigen::Index>(i), k) = in_rows[i][static_cast<std::size_t>(k)];
    for (int q = 0; q < m; ++q)
      outputs_(static_cast<Eigen::Index>(i), q) = out_rows[i][static_cast<std::size_t>(q)];
  }
}

Eigen::VectorXd TabulatedSimulator::operator()(
    const Eigen::VectorXd& x, const Eigen::VectorXd& theta) const {
  Eigen::VectorXd query(x.size() + theta.size());
  query << x, theta;
  if (query.size() != inputs_.cols())
    throw DataError("tabulated simulator: query dimension mismatch");

  for (Eigen::Index i = 0; i < inputs_.rows(); ++i) {
    bool match = true;
    for (Eigen::Index k = 0; k < query.size() && match; ++k) {
      const double scale = std::max({1.0, std::abs(query(k)), std::abs(inputs_(i, k))});
      if (std::abs(inputs_(i, k) - query(k)) > tol_ * scale) match = false;
    }
    if (match) return outputs_.row(i).transpose();
  }

  std::ostringstream what;
  what.precision(17);
  what << "tabulated simulator: no run for point (";
  for (Eigen::Index k = 0; k < query.size(); ++k)
    what << (k ? "," : "") << query(k);
  what << "); extend the table or regenerate the design request";
  throw DataError(what.str());
}

void write_design_request(const std::string& path,
                          const std::vector<int>& test_ids,
                          const Eigen::MatrixXd& inputs, int r, int p, int m) {
  if (static_cast<Eigen::Index>(test_ids.size()) != inputs.rows())
    throw DataError("write_design_request: id/row mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.precision(17);
  out << "test_id";
  for (int k = 1; k <= r; ++k) out << ",x" << k;
  for (int k = 1; k <= p; ++k) out << ",theta" << k;
  for (int q = 1; q <= m; ++q) out << ",y" << q;
  out << "\n";
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    out << test_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < inputs.cols(); ++k) out << "," << inputs(i, k);
    for (int q = 0; q < m; ++q) out << ",";
    out << "\n";
  }
}

}  // namespace iuq::sim
