#include <algorithm>
#include <chrono>

#include <fmt/format.h>

#include "gradc/interpreter.hpp"
#include "gradc/parser.hpp"
#include "gradc/tools.hpp"

namespace gradc::tools {

using rt::Value;

ArrayMode parse_array_mode(const std::string& s) {
  if (s == "immutable") return ArrayMode::Immutable;
  if (s == "subarray-copy") return ArrayMode::SubarrayCopy;
  if (s == "persistent") return ArrayMode::Persistent;
  throw Error(fmt::format("unknown array mode '{}' (immutable, subarray-copy, persistent)", s));
}

std::string array_mode_name(ArrayMode m) {
  switch (m) {
    case ArrayMode::Immutable: return "immutable";
    case ArrayMode::SubarrayCopy: return "subarray-copy";
    default: return "persistent";
  }
}

std::string BenchRow::csv_header() { return "mode,n,m,d,seconds,bytes_allocated"; }

std::string BenchRow::csv() const {
  return fmt::format("{},{},{},{},{:.6f},{}", array_mode_name(mode), n, m, d, seconds, bytes_allocated);
}

const char* lattice_source() {
  return R"(def lattice(x, outer, inner):
    r = zeros_like(x[0])
    for _o in range(outer):
        x = append(x, r)
        for _i in range(inner):
            y = x[-1] + 1.0
            x = setitem(x, -1, y)
    return mean(x)
)";
}

BenchRow bench_lattice(const BenchConfig& cfg) {
  if (cfg.n < 1 || cfg.m < 1 || cfg.d < 1 || cfg.repeats < 1) throw Error("n, m, d and repeats must be at least 1");
  static const ad::Derivative grad = ad::grad(lang::parse(lattice_source()), "lattice", {0});

  rt::EvalOptions eo;
  eo.inplace_updates = cfg.mode != ArrayMode::Immutable;
  eo.trace = false;
  const std::vector<double> row(static_cast<std::size_t>(cfg.d), 0.5);
  auto input = [&] {
    const rt::Shape shape{1, static_cast<std::size_t>(cfg.d)};
    Value x = cfg.mode == ArrayMode::Persistent ? Value::parray(pa::pa_new(pa::Array{shape, row}))
                                                : Value::dense(rt::Dense(shape, row));
    return std::vector<Value>{x, Value::integer(cfg.n), Value::integer(cfg.m)};
  };

  auto run_once = [&] {
    std::vector<Value> args = input();
    const auto t0 = std::chrono::steady_clock::now();
    Value g = rt::eval_program(grad.program, grad.entry, std::move(args), eo);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  run_once();
  std::vector<double> times;
  std::uint64_t bytes = 0;
  for (int k = 0; k < cfg.repeats; ++k) {
    rt::alloc_stats().reset();
    pa::stats().reset();
    times.push_back(run_once());
    bytes = rt::alloc_stats().total_bytes + pa::stats().bytes_allocated;
  }
  std::sort(times.begin(), times.end());
  return BenchRow{cfg.mode, cfg.n, cfg.m, cfg.d, times[times.size() / 2], bytes};
}

}  // namespace gradc::tools
