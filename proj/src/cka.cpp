#include "fedsym/cka.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace fedsym {

namespace {

Matrix centered(const Matrix& m) { return m.rowwise() - m.colwise().mean(); }

}  // namespace

double linear_cka(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw std::invalid_argument("CKA inputs must have the same number of rows");
  if (x.rows() < 2) throw DegenerateInput("CKA needs at least two samples");
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("CKA inputs must be finite");

  const Matrix xc = centered(x);
  const Matrix yc = centered(y);
  const double xx = (xc.transpose() * xc).norm();
  const double yy = (yc.transpose() * yc).norm();
  if (xx == 0.0 || yy == 0.0) throw DegenerateInput("CKA input is constant across samples");
  const double xy = (yc.transpose() * xc).squaredNorm();
  return std::clamp(xy / (xx * yy), 0.0, 1.0);
}

CkaMatrix cka_matrix(const std::vector<ModelParams>& models, const SampleStore& testset,
                     std::vector<std::string> labels) {
  if (models.size() < 2) throw std::invalid_argument("CKA matrix needs at least two models");
  for (const auto& m : models)
    if (m.shape != models.front().shape) throw ShapeMismatch("models differ in shape");
  if (labels.empty())
    for (std::size_t i = 0; i < models.size(); ++i) labels.push_back(std::to_string(i));
  if (labels.size() != models.size()) throw std::invalid_argument("one label per model required");

  std::vector<Matrix> outputs;
  outputs.reserve(models.size());
  for (const auto& m : models) outputs.push_back(forward(m, testset.features));

  const auto n = static_cast<Eigen::Index>(models.size());
  CkaMatrix out{std::move(labels), Matrix::Zero(n, n)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j)
      out.values(i, j) = out.values(j, i) = linear_cka(outputs[i], outputs[j]);
  return out;
}

void write_cka_csv(const CkaMatrix& m, std::ostream& out) {
  out << "index";
  for (const auto& l : m.labels) out << ',' << l;
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    out << m.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", m.values(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace fedsym
