#include "recfno/tensor.hpp"

#include <sstream>

namespace recfno {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
    n *= e;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::backward(Tensor loss) {
  if (loss.size() != 1) {
    throw ContractError("backward: loss must have a single element, got shape " +
                        shape_string(loss.shape()));
  }
  if (entries_.empty()) throw ContractError("backward: tape is empty");
  loss.grad_mut()[0] += 1.0;
  // Move out first so rules that throw still leave the tape consumed.
  std::vector<Entry> entries = std::move(entries_);
  entries_.clear();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) (*it)();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) { Tape::current().backward(loss); }

namespace detail {

void check_finite_debug([[maybe_unused]] const Tensor& t, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  if (!t.values().allFinite()) throw NumericError(std::string(op) + ": produced non-finite values");
#endif
}

void check_finite_debug([[maybe_unused]] const ComplexTensor& t, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  if (!all_finite(t.values())) throw NumericError(std::string(op) + ": produced non-finite values");
#endif
}

}  // namespace detail

}  // namespace recfno
