#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

/// Constant-time building blocks. Every routine here runs the same
/// instruction sequence and touches the same addresses regardless of the
/// secret operands; only public sizes influence control flow.
///
/// A thread-local TraceRecorder can be installed to capture which
/// primitives ran and on what shapes. Events never carry data values, so two
/// runs over same-shape inputs must produce identical traces.
namespace etree::obl {

using word = std::uint64_t;

enum class OpKind : std::uint8_t { greater, equal, select, assign, access, matmul, scan };

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::greater: return "greater";
    case OpKind::equal: return "equal";
    case OpKind::select: return "select";
    case OpKind::assign: return "assign";
    case OpKind::access: return "access";
    case OpKind::matmul: return "matmul";
    case OpKind::scan: return "scan";
  }
  return "?";
}

struct Shape {
  std::array<std::uint64_t, 3> dims{};
  std::uint8_t rank = 0;

  Shape() = default;
  Shape(std::initializer_list<std::uint64_t> d) {
    for (auto v : d) {
      if (rank == dims.size()) throw std::logic_error("Shape: rank > 3");
      dims[rank++] = v;
    }
  }
  std::uint64_t elements() const {
    std::uint64_t n = 1;
    for (std::uint8_t i = 0; i < rank; ++i) n *= dims[i];
    return n;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct TraceEvent {
  OpKind op_kind;
  Shape operand_shape;
  std::uint64_t sequence_number;
  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

class TraceRecorder {
 public:
  void record(OpKind kind, Shape shape) {
    events_.push_back(TraceEvent{kind, shape, next_seq_++});
  }
  void record_n(OpKind kind, Shape shape, std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) record(kind, shape);
  }
  const std::vector<TraceEvent>& events() const { return events_; }
  std::vector<TraceEvent> take() {
    next_seq_ = 0;
    return std::exchange(events_, {});
  }

 private:
  std::vector<TraceEvent> events_;
  std::uint64_t next_seq_ = 0;
};

namespace detail {
inline TraceRecorder*& current_recorder() {
  thread_local TraceRecorder* rec = nullptr;
  return rec;
}
}  // namespace detail

/// Installs `rec` as this thread's recorder for the lifetime of the scope.
class TraceScope {
 public:
  explicit TraceScope(TraceRecorder& rec) : prev_(detail::current_recorder()) {
    detail::current_recorder() = &rec;
  }
  ~TraceScope() { detail::current_recorder() = prev_; }
  TraceScope(const TraceScope&) = delete;
  TraceScope& operator=(const TraceScope&) = delete;

 private:
  TraceRecorder* prev_;
};

inline bool tracing() { return detail::current_recorder() != nullptr; }

inline void emit(OpKind kind, Shape shape) {
  if (auto* rec = detail::current_recorder()) rec->record(kind, shape);
}

inline void emit_n(OpKind kind, Shape shape, std::uint64_t n) {
  if (auto* rec = detail::current_recorder()) rec->record_n(kind, shape, n);
}

template <class F>
std::vector<TraceEvent> trace_of(F&& f) {
  TraceRecorder rec;
  {
    TraceScope scope(rec);
    std::forward<F>(f)();
  }
  return rec.take();
}

/// One event per line: `seq,op_kind,shape` with shape dims joined by 'x'.
inline std::string dump(std::span<const TraceEvent> events) {
  std::ostringstream os;
  for (const auto& e : events) {
    os << e.sequence_number << ',' << to_string(e.op_kind) << ',';
    for (std::uint8_t i = 0; i < e.operand_shape.rank; ++i) {
      if (i) os << 'x';
      os << e.operand_shape.dims[i];
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Raw kernels. No trace emission; used inside loops that emit one aggregate
// event for the whole pass.
namespace detail {

/// 1 iff a > b (unsigned), computed as the borrow out of b - a.
constexpr word gt(word a, word b) {
  const word diff = b - a;
  return ((~b & a) | (~(b ^ a) & diff)) >> 63;
}

constexpr word eq(word a, word b) {
  const word x = a ^ b;
  return ((x | (0 - x)) >> 63) ^ 1;
}

/// All-ones when cond == 1, zero when cond == 0.
constexpr word mask(word cond) { return word{0} - (cond & 1); }

constexpr word sel(word cond, word a, word b) {
  const word m = mask(cond);
  return (a & m) | (b & ~m);
}

/// Maps IEEE-754 doubles onto unsigned integers with the same total order.
inline word total_order_key(double d) {
  const word bits = std::bit_cast<word>(d);
  const word neg = word{0} - (bits >> 63);
  return bits ^ (neg | (word{1} << 63));
}

inline double sel_f64(word cond, double a, double b) {
  return std::bit_cast<double>(sel(cond, std::bit_cast<word>(a), std::bit_cast<word>(b)));
}

/// dst <- cond ? src : dst for any trivially copyable object, one byte lane
/// at a time through a mask; dst is always rewritten.
template <class T>
inline void cond_copy(word cond, T& dst, const T& src) {
  static_assert(std::is_trivially_copyable_v<T>);
  const auto m8 = static_cast<unsigned char>(mask(cond));
  auto* d = reinterpret_cast<unsigned char*>(&dst);
  const auto* s = reinterpret_cast<const unsigned char*>(&src);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    d[i] = static_cast<unsigned char>((s[i] & m8) | (d[i] & ~m8));
}

inline void cond_copy_words(word cond, std::span<word> dst, std::span<const word> src) {
  const word m = mask(cond);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (src[i] & m) | (dst[i] & ~m);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Traced primitives.

inline word ogreater(word a, word b) {
  emit(OpKind::greater, {1});
  return detail::gt(a, b);
}

/// Float comparison through the total-order key; NaN payloads order by bits.
inline word ogreater(double a, double b) {
  emit(OpKind::greater, {1});
  return detail::gt(detail::total_order_key(a), detail::total_order_key(b));
}

inline word oequal(word a, word b) {
  emit(OpKind::equal, {1});
  return detail::eq(a, b);
}

inline word oselect(word cond, word a, word b) {
  emit(OpKind::select, {1});
  return detail::sel(cond, a, b);
}

inline double oselect(word cond, double a, double b) {
  emit(OpKind::select, {1});
  return detail::sel_f64(cond, a, b);
}

template <class T>
  requires(std::is_trivially_copyable_v<T> && !std::is_arithmetic_v<T>)
inline T oselect(word cond, const T& a, const T& b) {
  emit(OpKind::select, {1});
  T out = b;
  detail::cond_copy(cond, out, a);
  return out;
}

/// dest <- src iff cond; dest is written either way.
template <class T>
  requires std::is_trivially_copyable_v<T>
inline void oassign(word cond, T& dest, const T& src) {
  emit(OpKind::assign, {1});
  detail::cond_copy(cond, dest, src);
}

inline void oassign(word cond, word& dest, word src) {
  emit(OpKind::assign, {1});
  dest = detail::sel(cond, src, dest);
}

/// Reads arr[idx] by touching every element. Index must be < arr.size();
/// the range check folds into a flag tested once after the scan.
template <class T>
  requires std::is_trivially_copyable_v<T>
T oaccess(std::span<const T> arr, std::size_t idx) {
  const auto n = static_cast<word>(arr.size());
  emit(OpKind::access, {n});
  emit_n(OpKind::select, {1}, n);
  T out{};
  for (std::size_t i = 0; i < arr.size(); ++i) detail::cond_copy(detail::eq(i, idx), out, arr[i]);
  if (!detail::gt(n, idx)) throw std::out_of_range("oaccess: index out of range");
  return out;
}

template <class T>
  requires std::is_trivially_copyable_v<T>
T oaccess(const std::vector<T>& arr, std::size_t idx) {
  return oaccess(std::span<const T>(arr), idx);
}

/// arr[idx] <- value via a full scan with a conditional write at every slot.
template <class T>
  requires std::is_trivially_copyable_v<T>
void owrite(std::span<T> arr, std::size_t idx, const T& value) {
  const auto n = static_cast<word>(arr.size());
  emit(OpKind::access, {n});
  emit_n(OpKind::assign, {1}, n);
  if (!detail::gt(n, idx)) throw std::out_of_range("owrite: index out of range");
  for (std::size_t i = 0; i < arr.size(); ++i) detail::cond_copy(detail::eq(i, idx), arr[i], value);
}

template <class T>
  requires std::is_trivially_copyable_v<T>
void owrite(std::vector<T>& arr, std::size_t idx, const T& value) {
  owrite(std::span<T>(arr), idx, value);
}

/// Fixed-stride variants over a flat word array holding `data.size()/stride`
/// lines; one access event per call, one touch event per line.
inline void oaccess_line(std::span<const word> data, std::size_t stride, std::size_t idx,
                         std::span<word> out) {
  const std::size_t lines = stride ? data.size() / stride : 0;
  emit(OpKind::access, {lines, stride});
  emit_n(OpKind::select, {stride}, lines);
  std::fill(out.begin(), out.end(), word{0});
  for (std::size_t l = 0; l < lines; ++l)
    detail::cond_copy_words(detail::eq(l, idx), out, data.subspan(l * stride, stride));
  if (!detail::gt(lines, idx)) throw std::out_of_range("oaccess_line: index out of range");
}

inline void owrite_line(std::span<word> data, std::size_t stride, std::size_t idx,
                        std::span<const word> line) {
  const std::size_t lines = stride ? data.size() / stride : 0;
  emit(OpKind::access, {lines, stride});
  emit_n(OpKind::assign, {stride}, lines);
  if (!detail::gt(lines, idx)) throw std::out_of_range("owrite_line: index out of range");
  for (std::size_t l = 0; l < lines; ++l)
    detail::cond_copy_words(detail::eq(l, idx), data.subspan(l * stride, stride), line);
}

}  // namespace etree::obl
