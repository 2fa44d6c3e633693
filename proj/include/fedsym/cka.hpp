#pragma once

#include "fedsym/dataset.hpp"
#include "fedsym/flsim.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsym {

class DegenerateInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Linear CKA between two representations of the same n samples:
///   ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F * ||Yc^T Yc||_F)
/// with column-centred Xc, Yc. Clamped to [0, 1].
double linear_cka(const Matrix& x, const Matrix& y);

struct CkaMatrix {
  std::vector<std::string> labels;
  Matrix values;  // symmetric, unit diagonal
};

/// Pairwise linear CKA of the models' logits on the full test set.
CkaMatrix cka_matrix(const std::vector<ModelParams>& models, const SampleStore& testset,
                     std::vector<std::string> labels = {});

/// Header row "index,<labels...>", then one "<label>,v,..." row per model, 6 decimals.
void write_cka_csv(const CkaMatrix& m, std::ostream& out);

}  // namespace fedsym
