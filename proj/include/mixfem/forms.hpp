#pragma once

// Symbolic variational forms: an immutable expression DAG, measures bound to
// integration meshes, and the block machinery (validation, extraction by
// argument block index, degree estimation, canonical printing).

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mixfem/space.hpp"

namespace mixfem {

enum class ExprKind {
  argument,
  coefficient,
  analytic,
  constant,
  spatial,
  grad,
  div,
  inner,
  product,
  sum,
  component_mul,
};

constexpr int test_argument = 0;
constexpr int trial_argument = 1;

struct ExprNode {
  ExprKind kind;
  std::shared_ptr<const ExprNode> a, b;

  std::vector<int> shape;  // empty = scalar, {n} = vector, {n,m} = matrix
  int gdim = -1;           // spatial dimension inherited from arguments/coefficients
  int degree = 0;          // estimated polynomial degree

  // argument
  SpacePtr space;
  int arg_number = -1;
  int block = 0;
  MixedSpacePtr mixed;

  // coefficient
  std::shared_ptr<const Function> function;

  // analytic coefficient
  std::function<void(const double*, double*)> fn;

  // constant
  double value = 0.0;

  // spatial coordinate
  MeshPtr coord_mesh;
};

using ExprNodePtr = std::shared_ptr<const ExprNode>;

class Expr {
public:
  explicit Expr(ExprNodePtr node) : node_(std::move(node)) {}

  const ExprNodePtr& node() const { return node_; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int degree() const { return node_->degree; }

private:
  ExprNodePtr node_;
};

namespace detail {

inline std::string shape_text(const std::vector<int>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

inline int merge_gdim(int a, int b) { return std::max(a, b); }

inline ExprNodePtr make_binary(ExprKind kind, ExprNodePtr a, ExprNodePtr b) {
  auto n = std::make_shared<ExprNode>();
  n->kind = kind;
  n->gdim = merge_gdim(a->gdim, b->gdim);
  switch (kind) {
    case ExprKind::product:
      if (!a->shape.empty() || !b->shape.empty())
        throw FormError("shape-mismatch", "product requires scalar operands");
      n->degree = a->degree + b->degree;
      break;
    case ExprKind::component_mul:
      if (!a->shape.empty() || b->shape.size() != 1)
        throw FormError("shape-mismatch", "component_mul requires a scalar and a vector");
      n->shape = b->shape;
      n->degree = a->degree + b->degree;
      break;
    case ExprKind::inner:
      if (a->shape != b->shape)
        throw FormError("shape-mismatch", "inner requires equal shapes, got " + shape_text(a->shape) + " and " +
                                              shape_text(b->shape));
      n->degree = a->degree + b->degree;
      break;
    case ExprKind::sum:
      if (a->shape != b->shape)
        throw FormError("shape-mismatch", "sum requires equal shapes, got " + shape_text(a->shape) + " and " +
                                              shape_text(b->shape));
      n->shape = a->shape;
      n->degree = std::max(a->degree, b->degree);
      break;
    default:
      throw InvalidArgumentError("make_binary: not a binary kind");
  }
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

}  // namespace detail

inline Expr argument(SpacePtr space, int number) {
  if (number != test_argument && number != trial_argument)
    throw InvalidArgumentError("argument number must be 0 (test) or 1 (trial)");
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::argument;
  n->space = std::move(space);
  n->arg_number = number;
  n->block = 0;
  n->gdim = n->space->mesh()->gdim();
  n->degree = n->space->element().degree();
  if (n->space->value_size() > 1) n->shape = {n->space->value_size()};
  return Expr(n);
}

inline Expr argument(const MixedSpacePtr&, int) {
  throw FormError("plural-required", "a mixed space provides arguments only through mixed_arguments");
}

inline std::vector<Expr> mixed_arguments(MixedSpacePtr mixed, int number) {
  if (number != test_argument && number != trial_argument)
    throw InvalidArgumentError("argument number must be 0 (test) or 1 (trial)");
  std::vector<Expr> out;
  for (std::size_t i = 0; i < mixed->size(); ++i) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::argument;
    n->space = (*mixed)[i];
    n->arg_number = number;
    n->block = static_cast<int>(i);
    n->mixed = mixed;
    n->gdim = n->space->mesh()->gdim();
    n->degree = n->space->element().degree();
    if (n->space->value_size() > 1) n->shape = {n->space->value_size()};
    out.push_back(Expr(n));
  }
  return out;
}

inline Expr coefficient(std::shared_ptr<const Function> f) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::coefficient;
  n->function = std::move(f);
  n->space = n->function->space();
  n->gdim = n->space->mesh()->gdim();
  n->degree = n->space->element().degree();
  if (n->space->value_size() > 1) n->shape = {n->space->value_size()};
  return Expr(n);
}

// Pointwise closure f(x, out); degree is a user-declared polynomial-equivalent
// degree used for quadrature selection.
inline Expr analytic_coefficient(std::function<void(const double*, double*)> fn, int value_size = 1,
                                 int degree = 2) {
  if (value_size < 1 || value_size > 3) throw InvalidArgumentError("analytic coefficient value size must be 1..3");
  if (degree < 0) throw InvalidArgumentError("analytic coefficient degree must be nonnegative");
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::analytic;
  n->fn = std::move(fn);
  n->degree = degree;
  if (value_size > 1) n->shape = {value_size};
  return Expr(n);
}

inline Expr constant(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::constant;
  n->value = v;
  return Expr(n);
}

inline Expr spatial_coordinate(MeshPtr mesh) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::spatial;
  n->coord_mesh = std::move(mesh);
  n->gdim = n->coord_mesh->gdim();
  n->degree = 1;
  n->shape = {n->gdim};
  return Expr(n);
}

inline Expr grad(const Expr& e) {
  const auto& c = e.node();
  if (c->kind != ExprKind::argument && c->kind != ExprKind::coefficient)
    throw NotSupportedError("grad applies directly to arguments and coefficients");
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::grad;
  n->a = c;
  n->gdim = c->gdim;
  n->degree = std::max(c->degree - 1, 0);
  n->shape = c->shape;
  n->shape.push_back(c->gdim);
  return Expr(n);
}

inline Expr div(const Expr& e) {
  const auto& c = e.node();
  if (c->kind != ExprKind::argument && c->kind != ExprKind::coefficient)
    throw NotSupportedError("div applies directly to arguments and coefficients");
  if (c->shape.size() != 1 || c->shape[0] != c->gdim)
    throw FormError("shape-mismatch", "div requires a vector matching the spatial dimension");
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::div;
  n->a = c;
  n->gdim = c->gdim;
  n->degree = std::max(c->degree - 1, 0);
  return Expr(n);
}

inline Expr inner(const Expr& a, const Expr& b) {
  return Expr(detail::make_binary(ExprKind::inner, a.node(), b.node()));
}

inline Expr operator*(const Expr& a, const Expr& b) {
  const bool sa = a.rank() == 0, sb = b.rank() == 0;
  if (sa && sb) return Expr(detail::make_binary(ExprKind::product, a.node(), b.node()));
  if (sa && b.rank() == 1) return Expr(detail::make_binary(ExprKind::component_mul, a.node(), b.node()));
  if (sb && a.rank() == 1) return Expr(detail::make_binary(ExprKind::component_mul, b.node(), a.node()));
  throw FormError("shape-mismatch", "operator* supports scalar*scalar and scalar*vector");
}

inline Expr operator*(double v, const Expr& e) { return constant(v) * e; }
inline Expr operator+(const Expr& a, const Expr& b) {
  return Expr(detail::make_binary(ExprKind::sum, a.node(), b.node()));
}
inline Expr operator-(const Expr& a, const Expr& b) { return a + (-1.0 * b); }
inline Expr operator-(const Expr& e) { return -1.0 * e; }

inline int estimate_degree(const Expr& e) { return e.degree(); }

// ---------------------------------------------------------------------------
// Measures

enum class MeasureKind { cell, exterior_facet };

struct Measure {
  MeasureKind kind;
  MeshPtr domain;
  std::shared_ptr<const MeshFunction> subdomain_data;  // optional
  std::optional<int> tag;

  int entity_dim() const { return kind == MeasureKind::cell ? domain->tdim() : domain->tdim() - 1; }
};

namespace detail {

inline Measure make_measure(MeasureKind kind, MeshPtr domain, std::shared_ptr<const MeshFunction> data,
                            std::optional<int> tag) {
  Measure m{kind, std::move(domain), std::move(data), tag};
  if (m.tag) {
    if (!m.subdomain_data) throw FormError("measure-subdomain", "a tagged measure needs subdomain data");
    if (m.subdomain_data->mesh()->id() != m.domain->id())
      throw FormError("measure-subdomain", "subdomain data lives on a different mesh");
    if (m.subdomain_data->dim() != m.entity_dim())
      throw FormError("measure-subdomain", "subdomain data dimension does not match the measure");
  }
  return m;
}

}  // namespace detail

inline Measure dx(MeshPtr mesh) { return detail::make_measure(MeasureKind::cell, std::move(mesh), nullptr, {}); }
inline Measure dx(MeshPtr mesh, MeshFunction data, int tag) {
  return detail::make_measure(MeasureKind::cell, std::move(mesh),
                              std::make_shared<const MeshFunction>(std::move(data)), tag);
}
inline Measure ds(MeshPtr mesh) {
  return detail::make_measure(MeasureKind::exterior_facet, std::move(mesh), nullptr, {});
}
inline Measure ds(MeshPtr mesh, MeshFunction data, int tag) {
  return detail::make_measure(MeasureKind::exterior_facet, std::move(mesh),
                              std::make_shared<const MeshFunction>(std::move(data)), tag);
}

// ---------------------------------------------------------------------------
// Integrals and forms

struct Integral {
  Expr integrand;
  Measure measure;
};

inline int estimate_degree(const Integral& integral) { return integral.integrand.degree(); }

namespace detail {

inline void collect_arguments(const ExprNodePtr& n, std::vector<ExprNodePtr>& out) {
  if (!n) return;
  if (n->kind == ExprKind::argument) out.push_back(n);
  collect_arguments(n->a, out);
  collect_arguments(n->b, out);
}

inline std::set<int> argument_numbers_of(const ExprNodePtr& n) {
  std::vector<ExprNodePtr> args;
  collect_arguments(n, args);
  std::set<int> out;
  for (const auto& a : args) out.insert(a->arg_number);
  return out;
}

}  // namespace detail

class Form {
public:
  Form() = default;

  explicit Form(std::vector<Integral> integrals) : integrals_(std::move(integrals)) {
    for (const auto& it : integrals_) {
      std::vector<ExprNodePtr> args;
      detail::collect_arguments(it.integrand.node(), args);
      for (const auto& a : args) {
        auto& spaces = spaces_[a->arg_number];
        if (!spaces.empty()) continue;
        if (a->mixed)
          for (std::size_t i = 0; i < a->mixed->size(); ++i) spaces.push_back((*a->mixed)[i]);
        else
          spaces.push_back(a->space);
      }
    }
  }

  Form(std::vector<Integral> integrals, std::map<int, std::vector<SpacePtr>> spaces)
      : integrals_(std::move(integrals)), spaces_(std::move(spaces)) {}

  const std::vector<Integral>& integrals() const { return integrals_; }
  bool empty() const { return integrals_.empty(); }
  int arity() const { return static_cast<int>(spaces_.size()); }

  std::vector<int> argument_numbers() const {
    std::vector<int> out;
    for (const auto& [r, s] : spaces_) out.push_back(r);
    return out;
  }

  int num_blocks(int arg_number) const {
    auto it = spaces_.find(arg_number);
    return it == spaces_.end() ? 0 : static_cast<int>(it->second.size());
  }

  const SpacePtr& argument_space(int arg_number, int block) const {
    return spaces_.at(arg_number).at(static_cast<std::size_t>(block));
  }

  const std::map<int, std::vector<SpacePtr>>& spaces() const { return spaces_; }

private:
  std::vector<Integral> integrals_;
  std::map<int, std::vector<SpacePtr>> spaces_;
};

inline Form operator*(const Expr& integrand, const Measure& measure) {
  if (integrand.rank() != 0) throw FormError("shape-mismatch", "integrands must be scalar");
  return Form({Integral{integrand, measure}});
}

inline Form operator+(const Form& a, const Form& b) {
  std::vector<Integral> all = a.integrals();
  for (const auto& it : b.integrals()) all.push_back(it);
  return Form(std::move(all));
}

// ---------------------------------------------------------------------------
// Validation

struct FormIssue {
  std::size_t integral;
  std::string code;
  std::string message;
};

namespace detail {

inline void check_linearity(const ExprNodePtr& n, std::size_t idx, std::vector<FormIssue>& issues) {
  if (!n) return;
  check_linearity(n->a, idx, issues);
  check_linearity(n->b, idx, issues);
  if (n->kind == ExprKind::product || n->kind == ExprKind::inner || n->kind == ExprKind::component_mul) {
    auto la = argument_numbers_of(n->a);
    auto lb = argument_numbers_of(n->b);
    for (int r : la)
      if (lb.count(r)) {
        issues.push_back({idx, "nonlinear", "argument " + std::to_string(r) + " multiplied by itself"});
        return;
      }
  } else if (n->kind == ExprKind::sum) {
    if (argument_numbers_of(n->a) != argument_numbers_of(n->b))
      issues.push_back({idx, "sum-mismatch", "summed terms carry different argument sets"});
  }
}

}  // namespace detail

inline std::vector<FormIssue> validate(const Form& form) {
  std::vector<FormIssue> issues;
  std::optional<std::set<int>> form_args;

  for (std::size_t idx = 0; idx < form.integrals().size(); ++idx) {
    const auto& it = form.integrals()[idx];
    std::vector<ExprNodePtr> args;
    detail::collect_arguments(it.integrand.node(), args);

    auto numbers = detail::argument_numbers_of(it.integrand.node());
    if (!form_args)
      form_args = numbers;
    else if (*form_args != numbers)
      issues.push_back({idx, "inconsistent-arity", "integral does not share the form's argument numbers"});

    // (b) cross-space combinations require a mixed space
    std::set<const FunctionSpace*> distinct_spaces;
    for (const auto& a : args) distinct_spaces.insert(a->space.get());
    if (distinct_spaces.size() > 1) {
      for (const auto& a : args)
        if (!a->mixed) {
          issues.push_back({idx, "mixed-space-required",
                            "arguments from different function spaces must come from a mixed space"});
          break;
        }
    }
    for (int r : numbers) {
      std::set<std::uint64_t> mixed_ids;
      std::set<const FunctionSpace*> plain;
      for (const auto& a : args)
        if (a->arg_number == r) {
          if (a->mixed)
            mixed_ids.insert(a->mixed->id());
          else
            plain.insert(a->space.get());
        }
      if (mixed_ids.size() + (plain.empty() ? 0 : 1) > 1)
        issues.push_back({idx, "mixed-space-required",
                          "argument " + std::to_string(r) + " drawn from more than one space"});
    }

    // (a) the measure must integrate over some argument's mesh
    std::set<std::uint64_t> mesh_ids;
    int min_tdim = 4, max_tdim = -1;
    for (const auto& a : args) {
      mesh_ids.insert(a->space->mesh()->id());
      min_tdim = std::min(min_tdim, a->space->mesh()->tdim());
      max_tdim = std::max(max_tdim, a->space->mesh()->tdim());
    }
    if (!args.empty() && !mesh_ids.count(it.measure.domain->id()))
      issues.push_back({idx, "measure-domain", "the integration mesh is not any argument's mesh"});

    // (c) couplings across meshes integrate over cells of the lowest-dimensional mesh
    if (mesh_ids.size() > 1) {
      if (max_tdim - min_tdim > 1)
        issues.push_back({idx, "unsupported-codimension", "argument meshes differ by more than one dimension"});
      if (it.measure.kind != MeasureKind::cell)
        issues.push_back({idx, "coupling-measure", "cross-mesh terms require a cell measure"});
      else if (it.measure.domain->tdim() != min_tdim)
        issues.push_back(
            {idx, "coupling-measure", "cross-mesh terms integrate over the lower-dimensional mesh"});
    }

    // (d) linearity in every argument
    detail::check_linearity(it.integrand.node(), idx, issues);
  }
  return issues;
}

inline void validate_or_throw(const Form& form) {
  auto issues = validate(form);
  if (issues.empty()) return;
  std::ostringstream os;
  for (const auto& i : issues) os << "[integral " << i.integral << "] " << i.code << ": " << i.message << "; ";
  throw FormError(issues.front().code, os.str());
}

// ---------------------------------------------------------------------------
// Block extraction

namespace detail {

inline void expand_terms(const ExprNodePtr& n, std::vector<ExprNodePtr>& out) {
  switch (n->kind) {
    case ExprKind::sum: {
      expand_terms(n->a, out);
      expand_terms(n->b, out);
      return;
    }
    case ExprKind::product:
    case ExprKind::inner:
    case ExprKind::component_mul: {
      std::vector<ExprNodePtr> la, lb;
      expand_terms(n->a, la);
      expand_terms(n->b, lb);
      if (la.size() == 1 && lb.size() == 1) {
        out.push_back(n);
        return;
      }
      for (const auto& ta : la)
        for (const auto& tb : lb) out.push_back(make_binary(n->kind, ta, tb));
      return;
    }
    default:
      out.push_back(n);
      return;
  }
}

inline std::map<int, int> term_blocks(const ExprNodePtr& term) {
  std::vector<ExprNodePtr> args;
  collect_arguments(term, args);
  std::map<int, int> blocks;
  for (const auto& a : args) {
    auto [pos, inserted] = blocks.emplace(a->arg_number, a->block);
    if (!inserted && pos->second != a->block)
      throw FormError("malformed-form", "a term mixes two block indices for one argument");
  }
  return blocks;
}

}  // namespace detail

// Dense grid of subforms indexed by test (and, for bilinear forms, trial)
// block. Empty entries are explicit and still carry their block's spaces.
struct BlockForms {
  int arity = 0;
  int rows = 0, cols = 1;
  std::vector<Form> forms;  // row-major

  const Form& operator()(int i, int j = 0) const {
    return forms.at(static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j));
  }
};

inline BlockForms extract_blocks(const Form& form) {
  const auto numbers = form.argument_numbers();
  if (numbers.empty() || numbers.front() != test_argument)
    throw FormError("malformed-form", "block extraction needs a test argument");
  BlockForms out;
  out.arity = form.arity();
  out.rows = form.num_blocks(test_argument);
  out.cols = out.arity == 2 ? form.num_blocks(trial_argument) : 1;

  std::vector<std::vector<Integral>> grid(static_cast<std::size_t>(out.rows) * static_cast<std::size_t>(out.cols));
  for (const auto& it : form.integrals()) {
    std::vector<ExprNodePtr> terms;
    detail::expand_terms(it.integrand.node(), terms);
    for (const auto& term : terms) {
      auto blocks = detail::term_blocks(term);
      for (int r : numbers)
        if (!blocks.count(r)) throw FormError("malformed-form", "a term is missing an argument");
      const int i = blocks.at(test_argument);
      const int j = out.arity == 2 ? blocks.at(trial_argument) : 0;
      grid[static_cast<std::size_t>(i) * static_cast<std::size_t>(out.cols) + static_cast<std::size_t>(j)].push_back(
          Integral{Expr(term), it.measure});
    }
  }

  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) {
      std::map<int, std::vector<SpacePtr>> spaces;
      spaces[test_argument] = {form.argument_space(test_argument, i)};
      if (out.arity == 2) spaces[trial_argument] = {form.argument_space(trial_argument, j)};
      out.forms.push_back(
          Form(std::move(grid[static_cast<std::size_t>(i) * static_cast<std::size_t>(out.cols) + static_cast<std::size_t>(j)]),
               std::move(spaces)));
    }
  return out;
}

inline Form extract_blocks(const Form& form, int i, int j) { return extract_blocks(form)(i, j); }
inline Form extract_blocks(const Form& form, int i) { return extract_blocks(form)(i); }

// ---------------------------------------------------------------------------
// Canonical printing

namespace detail {

class FormPrinter {
public:
  std::string expr(const ExprNodePtr& n) {
    std::ostringstream os;
    switch (n->kind) {
      case ExprKind::argument:
        os << "arg(" << (n->arg_number == test_argument ? "test" : "trial") << ", block=" << n->block << ", "
           << space_text(*n->space) << ", " << mesh_label(*n->space->mesh()) << ")";
        break;
      case ExprKind::coefficient:
        os << "coef(" << space_text(*n->space) << ", " << mesh_label(*n->space->mesh()) << ")";
        break;
      case ExprKind::analytic:
        os << "analytic(deg=" << n->degree << ", size=" << (n->shape.empty() ? 1 : n->shape[0]) << ")";
        break;
      case ExprKind::constant:
        os << "const(" << n->value << ")";
        break;
      case ExprKind::spatial:
        os << "x(" << mesh_label(*n->coord_mesh) << ")";
        break;
      case ExprKind::grad:
        os << "grad(" << expr(n->a) << ")";
        break;
      case ExprKind::div:
        os << "div(" << expr(n->a) << ")";
        break;
      case ExprKind::inner:
        os << "inner(" << expr(n->a) << ", " << expr(n->b) << ")";
        break;
      case ExprKind::product:
        os << "(" << expr(n->a) << " * " << expr(n->b) << ")";
        break;
      case ExprKind::component_mul:
        os << "(" << expr(n->a) << " .* " << expr(n->b) << ")";
        break;
      case ExprKind::sum:
        os << "(" << expr(n->a) << " + " << expr(n->b) << ")";
        break;
    }
    return os.str();
  }

  std::string integral(const Integral& it) {
    std::ostringstream os;
    os << "integral(" << expr(it.integrand.node()) << ", " << (it.measure.kind == MeasureKind::cell ? "dx" : "ds")
       << ", " << mesh_label(*it.measure.domain);
    if (it.measure.tag) os << ", tag=" << *it.measure.tag;
    os << ")";
    return os.str();
  }

private:
  std::string mesh_label(const Mesh& mesh) {
    auto [pos, inserted] = labels_.emplace(mesh.id(), static_cast<int>(labels_.size()));
    (void)inserted;
    return "mesh#" + std::to_string(pos->second);
  }

  std::string space_text(const FunctionSpace& space) {
    std::string out = "P" + std::to_string(space.element().degree());
    if (space.value_size() > 1) out += "^" + std::to_string(space.value_size());
    return out;
  }

  std::map<std::uint64_t, int> labels_;
};

}  // namespace detail

inline std::string to_string(const Form& form) {
  detail::FormPrinter printer;
  std::ostringstream os;
  os << "form(arity=" << form.arity() << ")\n";
  for (const auto& it : form.integrals()) os << "  " << printer.integral(it) << "\n";
  return os.str();
}

inline std::string to_string(const Expr& e) {
  detail::FormPrinter printer;
  return printer.expr(e.node());
}

}  // namespace mixfem
