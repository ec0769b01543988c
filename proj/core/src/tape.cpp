#include "advfield/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "kernels.hpp"

namespace advfield {

namespace {

kernels::Padding to_kernel_pad(Padding p) {
    return p == Padding::Zero ? kernels::Padding::Zero : kernels::Padding::Replicate;
}

// Collapses a full-shape gradient onto a scalar leaf when the op broadcast.
Tensor reduce_to(Tensor g, const Shape& target) {
    if (g.shape() == target) return g;
    if (shape_numel(target) == 1) {
        Tensor r(target);
        r[0] = sum(g);
        return r;
    }
    throw ShapeError("gradient reduction: incompatible shapes");
}

void check_same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) {
        throw Error(std::string(op) + ": operands from different tapes");
    }
}

} // namespace

Var Tape::leaf(Tensor value) {
    ensure_finite(value, "leaf");
    nodes_.push_back(Node{std::move(value), {}, nullptr, false});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) {
    ensure_finite(value, "constant");
    nodes_.push_back(Node{std::move(value), {}, nullptr, true});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(const char* op, Tensor value, std::vector<int> parents, BackFn back) {
    ensure_finite(value, op);
    nodes_.push_back(Node{std::move(value), std::move(parents), std::move(back), false});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, Tensor g) {
    const auto idx = static_cast<std::size_t>(id);
    if (!needed_[idx]) return;
    const Node& node = nodes_[idx];
    require_same_shape(g, node.value, "gradient accumulate");
    if (!has_grad_[idx]) {
        grads_[idx] = std::move(g);
        has_grad_[idx] = 1;
    } else {
        Tensor& acc = grads_[idx];
        double* pa = acc.data();
        const double* pg = g.data();
        for (std::size_t i = 0, n = acc.numel(); i < n; ++i) pa[i] += pg[i];
    }
}

bool Tape::wants(int id) const { return needed_[static_cast<std::size_t>(id)] != 0; }

std::vector<Tensor> Tape::backward(Var loss, std::span<const Var> targets) {
    if (loss.tape != this || loss.id < 0 ||
        loss.id >= static_cast<int>(nodes_.size())) {
        throw Error("backward: loss not on this tape");
    }
    if (nodes_[static_cast<std::size_t>(loss.id)].value.numel() != 1) {
        throw ShapeError("backward: loss must be scalar");
    }
    for (Var t : targets) {
        if (t.tape != this || t.id < 0 || t.id >= static_cast<int>(nodes_.size())) {
            throw Error("backward: target not in graph");
        }
        const Node& n = nodes_[static_cast<std::size_t>(t.id)];
        if (n.back || !n.parents.empty()) throw Error("backward: target is not a leaf");
        if (n.is_constant) throw Error("backward: target is a constant");
    }

    needed_.assign(nodes_.size(), 0);
    grads_.assign(nodes_.size(), Tensor());
    has_grad_.assign(nodes_.size(), 0);

    for (Var t : targets) needed_[static_cast<std::size_t>(t.id)] = 1;
    // A node matters iff some parent chain ends in a target; parents always
    // have smaller indices, so one ascending sweep settles the flags.
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (needed_[i]) continue;
        for (int p : nodes_[i].parents) {
            if (needed_[static_cast<std::size_t>(p)]) {
                needed_[i] = 1;
                break;
            }
        }
    }

    if (needed_[static_cast<std::size_t>(loss.id)]) {
        Tensor seed(nodes_[static_cast<std::size_t>(loss.id)].value.shape());
        seed[0] = 1.0;
        has_grad_[static_cast<std::size_t>(loss.id)] = 1;
        grads_[static_cast<std::size_t>(loss.id)] = std::move(seed);
        for (int i = loss.id; i >= 0; --i) {
            const auto idx = static_cast<std::size_t>(i);
            if (!has_grad_[idx] || !needed_[idx]) continue;
            if (nodes_[idx].back) {
                nodes_[idx].back(*this, grads_[idx]);
                if (std::none_of(targets.begin(), targets.end(),
                                 [i](Var t) { return t.id == i; })) {
                    grads_[idx] = Tensor(); // release intermediate gradient
                    has_grad_[idx] = 0;
                }
            }
        }
    }

    std::vector<Tensor> out;
    out.reserve(targets.size());
    for (Var t : targets) {
        const auto idx = static_cast<std::size_t>(t.id);
        if (has_grad_[idx]) {
            out.push_back(grads_[idx]);
        } else {
            out.push_back(Tensor::zeros(nodes_[idx].value.shape()));
        }
    }
    needed_.clear();
    grads_.clear();
    has_grad_.clear();
    return out;
}

Tensor Tape::backward(Var loss, Var target) {
    const Var targets[1] = {target};
    return backward(loss, std::span<const Var>(targets)).front();
}

// ---------------------------------------------------------------------------
// elementwise / scalar ops
// ---------------------------------------------------------------------------

namespace {

void check_binary_shapes(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b) || a.numel() == 1 || b.numel() == 1) return;
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

Tensor broadcast_apply(const Tensor& a, const Tensor& b, double (*f)(double, double)) {
    if (a.same_shape(b)) {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    if (a.numel() == 1) {
        Tensor out(b.shape());
        for (std::size_t i = 0; i < b.numel(); ++i) out[i] = f(a[0], b[i]);
        return out;
    }
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[0]);
    return out;
}

} // namespace

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    check_binary_shapes(a.value(), b.value(), "add");
    Tensor out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x + y; });
    const int ia = a.id, ib = b.id;
    return a.tape->record("add", std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        t.accumulate(ia, reduce_to(g, t.value_of(ia).shape()));
        t.accumulate(ib, reduce_to(g, t.value_of(ib).shape()));
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    check_binary_shapes(a.value(), b.value(), "sub");
    Tensor out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x - y; });
    const int ia = a.id, ib = b.id;
    return a.tape->record("sub", std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        t.accumulate(ia, reduce_to(g, t.value_of(ia).shape()));
        t.accumulate(ib, reduce_to(scale(g, -1.0), t.value_of(ib).shape()));
    });
}

Var mul(Var a, Var b) {
    check_same_tape(a, b, "mul");
    check_binary_shapes(a.value(), b.value(), "mul");
    Tensor out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x * y; });
    const int ia = a.id, ib = b.id;
    return a.tape->record("mul", std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& av = t.value_of(ia);
        const Tensor& bv = t.value_of(ib);
        if (t.wants(ia)) {
            Tensor gb = bv.numel() == 1 ? scale(g, bv[0]) : mul(g, bv);
            t.accumulate(ia, reduce_to(std::move(gb), av.shape()));
        }
        if (t.wants(ib)) {
            Tensor ga = av.numel() == 1 ? scale(g, av[0]) : mul(g, av);
            t.accumulate(ib, reduce_to(std::move(ga), bv.shape()));
        }
    });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
    const int ia = a.id;
    return a.tape->record("scale", scale(a.value(), s), {ia}, [ia, s](Tape& t, const Tensor& g) {
        t.accumulate(ia, scale(g, s));
    });
}

Var add_scalar(Var a, double s) {
    const int ia = a.id;
    return a.tape->record("add_scalar", add_scalar(a.value(), s), {ia},
                          [ia](Tape& t, const Tensor& g) { t.accumulate(ia, g); });
}

Var exp(Var a) {
    const int ia = a.id;
    const int iv = static_cast<int>(a.tape->size()); // id of the node about to be recorded
    return a.tape->record("exp", exp(a.value()), {ia}, [ia, iv](Tape& t, const Tensor& g) {
        t.accumulate(ia, mul(g, t.value_of(iv)));
    });
}

Var log(Var a) {
    const int ia = a.id;
    return a.tape->record("log", log(a.value()), {ia}, [ia](Tape& t, const Tensor& g) {
        const Tensor& av = t.value_of(ia);
        Tensor gi(av.shape());
        for (std::size_t i = 0; i < av.numel(); ++i) gi[i] = g[i] / av[i];
        t.accumulate(ia, std::move(gi));
    });
}

Var sqrt(Var a) {
    Tensor out(a.value().shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(a.value()[i]);
    const int ia = a.id;
    const int iv = static_cast<int>(a.tape->size());
    return a.tape->record("sqrt", std::move(out), {ia}, [ia, iv](Tape& t, const Tensor& g) {
        const Tensor& sv = t.value_of(iv);
        Tensor gi(sv.shape());
        for (std::size_t i = 0; i < sv.numel(); ++i) {
            gi[i] = sv[i] > 0.0 ? g[i] / (2.0 * sv[i]) : 0.0;
        }
        t.accumulate(ia, std::move(gi));
    });
}

Var relu(Var a) {
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    const int ia = a.id;
    return a.tape->record("relu", std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
        const Tensor& av2 = t.value_of(ia);
        Tensor gi(av2.shape());
        for (std::size_t i = 0; i < av2.numel(); ++i) gi[i] = av2[i] > 0.0 ? g[i] : 0.0;
        t.accumulate(ia, std::move(gi));
    });
}

Var sum(Var a) {
    const int ia = a.id;
    return a.tape->record("sum", Tensor::scalar(sum(a.value())), {ia},
                          [ia](Tape& t, const Tensor& g) {
                              t.accumulate(ia, Tensor::full(t.value_of(ia).shape(), g[0]));
                          });
}

Var mean(Var a) {
    const double inv = 1.0 / static_cast<double>(a.value().numel());
    return scale(sum(a), inv);
}

Var reshape(Var a, Shape shape) {
    if (shape_numel(shape) != a.value().numel()) {
        throw ShapeError("reshape: element count mismatch");
    }
    Tensor out(shape, std::vector<double>(a.value().values().begin(), a.value().values().end()));
    const int ia = a.id;
    return a.tape->record("reshape", std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
        const Shape& src = t.value_of(ia).shape();
        Tensor gi(src, std::vector<double>(g.values().begin(), g.values().end()));
        t.accumulate(ia, std::move(gi));
    });
}

// ---------------------------------------------------------------------------
// structured ops
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
    std::size_t cin, cout, h, w, kh, kw;
    bool per_plane; // rank-2 kernel applied to every input plane
};

ConvDims conv_dims(const Tensor& in, const Tensor& k) {
    ConvDims d{};
    if (in.rank() == 2) {
        d.cin = 1;
        d.h = in.extent(0);
        d.w = in.extent(1);
    } else if (in.rank() == 3) {
        d.cin = in.extent(0);
        d.h = in.extent(1);
        d.w = in.extent(2);
    } else {
        throw ShapeError("conv2d: input must be {H,W} or {C,H,W}");
    }
    if (k.rank() == 2) {
        d.per_plane = true;
        d.cout = d.cin;
        d.kh = k.extent(0);
        d.kw = k.extent(1);
    } else if (k.rank() == 4) {
        d.per_plane = false;
        d.cout = k.extent(0);
        d.kh = k.extent(2);
        d.kw = k.extent(3);
        if (k.extent(1) != d.cin) {
            throw ShapeError("conv2d: kernel expects " + std::to_string(k.extent(1)) +
                             " input channels, got " + std::to_string(d.cin));
        }
        if (in.rank() != 3) throw ShapeError("conv2d: rank-4 kernel needs {C,H,W} input");
    } else {
        throw ShapeError("conv2d: kernel must be {kh,kw} or {Cout,Cin,kh,kw}");
    }
    if (d.kh % 2 == 0 || d.kw % 2 == 0) {
        throw ShapeError("conv2d: kernel extents must be odd");
    }
    return d;
}

} // namespace

Var conv2d(Var input, Var kernel, Padding pad) {
    check_same_tape(input, kernel, "conv2d");
    const Tensor& in = input.value();
    const Tensor& k = kernel.value();
    const ConvDims d = conv_dims(in, k);
    const std::size_t plane = d.h * d.w;

    Shape out_shape = in.rank() == 2 ? Shape{d.h, d.w} : Shape{d.cout, d.h, d.w};
    Tensor out(std::move(out_shape));
    const auto kp = to_kernel_pad(pad);
    if (d.per_plane) {
        for (std::size_t c = 0; c < d.cin; ++c) {
            kernels::conv2d_acc(in.data() + c * plane, d.h, d.w, k.data(), d.kh, d.kw,
                                kp, out.data() + c * plane);
        }
    } else {
        for (std::size_t co = 0; co < d.cout; ++co) {
            for (std::size_t ci = 0; ci < d.cin; ++ci) {
                kernels::conv2d_acc(in.data() + ci * plane, d.h, d.w,
                                    k.data() + (co * d.cin + ci) * d.kh * d.kw,
                                    d.kh, d.kw, kp, out.data() + co * plane);
            }
        }
    }

    const int ii = input.id, ik = kernel.id;
    return input.tape->record(
        "conv2d", std::move(out), {ii, ik}, [ii, ik, d, kp, plane](Tape& t, const Tensor& g) {
            const Tensor& in2 = t.value_of(ii);
            const Tensor& k2 = t.value_of(ik);
            if (t.wants(ii)) {
                Tensor gi(in2.shape());
                if (d.per_plane) {
                    for (std::size_t c = 0; c < d.cin; ++c) {
                        kernels::conv2d_acc_grad_input(g.data() + c * plane, d.h, d.w,
                                                       k2.data(), d.kh, d.kw, kp,
                                                       gi.data() + c * plane);
                    }
                } else {
                    for (std::size_t co = 0; co < d.cout; ++co) {
                        for (std::size_t ci = 0; ci < d.cin; ++ci) {
                            kernels::conv2d_acc_grad_input(
                                g.data() + co * plane, d.h, d.w,
                                k2.data() + (co * d.cin + ci) * d.kh * d.kw, d.kh, d.kw,
                                kp, gi.data() + ci * plane);
                        }
                    }
                }
                t.accumulate(ii, std::move(gi));
            }
            if (t.wants(ik)) {
                Tensor gk(k2.shape());
                if (d.per_plane) {
                    for (std::size_t c = 0; c < d.cin; ++c) {
                        kernels::conv2d_acc_grad_kernel(g.data() + c * plane,
                                                        in2.data() + c * plane, d.h, d.w,
                                                        d.kh, d.kw, kp, gk.data());
                    }
                } else {
                    for (std::size_t co = 0; co < d.cout; ++co) {
                        for (std::size_t ci = 0; ci < d.cin; ++ci) {
                            kernels::conv2d_acc_grad_kernel(
                                g.data() + co * plane, in2.data() + ci * plane, d.h, d.w,
                                d.kh, d.kw, kp,
                                gk.data() + (co * d.cin + ci) * d.kh * d.kw);
                        }
                    }
                }
                t.accumulate(ik, std::move(gk));
            }
        });
}

Var bias_add(Var input, Var bias) {
    check_same_tape(input, bias, "bias_add");
    const Tensor& in = input.value();
    const Tensor& b = bias.value();
    if (in.rank() != 3 || b.rank() != 1 || b.extent(0) != in.extent(0)) {
        throw ShapeError("bias_add: expected {C,H,W} input and {C} bias");
    }
    const std::size_t c = in.extent(0), plane = in.extent(1) * in.extent(2);
    Tensor out(in.shape());
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double bv = b[ci];
        for (std::size_t p = 0; p < plane; ++p) out[ci * plane + p] = in[ci * plane + p] + bv;
    }
    const int ii = input.id, ib = bias.id;
    return input.tape->record("bias_add", std::move(out), {ii, ib},
                              [ii, ib, c, plane](Tape& t, const Tensor& g) {
                                  t.accumulate(ii, g);
                                  if (t.wants(ib)) {
                                      Tensor gb(Shape{c});
                                      for (std::size_t ci = 0; ci < c; ++ci) {
                                          double s = 0.0;
                                          for (std::size_t p = 0; p < plane; ++p) s += g[ci * plane + p];
                                          gb[ci] = s;
                                      }
                                      t.accumulate(ib, std::move(gb));
                                  }
                              });
}

Var maxpool2(Var input) {
    const Tensor& in = input.value();
    const bool has_c = in.rank() == 3;
    if (!has_c && in.rank() != 2) throw ShapeError("maxpool2: expected {H,W} or {C,H,W}");
    const std::size_t c = has_c ? in.extent(0) : 1;
    const std::size_t h = in.extent(has_c ? 1 : 0), w = in.extent(has_c ? 2 : 1);
    if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2: extents must be even");
    const std::size_t plane = h * w, oplane = plane / 4;

    Shape out_shape = has_c ? Shape{c, h / 2, w / 2} : Shape{h / 2, w / 2};
    Tensor out(std::move(out_shape));
    std::vector<std::size_t> argmax(c * oplane); // absolute input offsets
    for (std::size_t ci = 0; ci < c; ++ci) {
        kernels::maxpool2(in.data() + ci * plane, h, w, out.data() + ci * oplane,
                          argmax.data() + ci * oplane);
        for (std::size_t p = 0; p < oplane; ++p) argmax[ci * oplane + p] += ci * plane;
    }
    const int ii = input.id;
    return input.tape->record("maxpool2", std::move(out), {ii},
                              [ii, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                                  Tensor gi(t.value_of(ii).shape());
                                  for (std::size_t p = 0; p < argmax.size(); ++p) {
                                      gi[argmax[p]] += g[p];
                                  }
                                  t.accumulate(ii, std::move(gi));
                              });
}

Var upsample2(Var input) {
    const Tensor& in = input.value();
    const bool has_c = in.rank() == 3;
    if (!has_c && in.rank() != 2) throw ShapeError("upsample2: expected {H,W} or {C,H,W}");
    const std::size_t c = has_c ? in.extent(0) : 1;
    const std::size_t h = in.extent(has_c ? 1 : 0), w = in.extent(has_c ? 2 : 1);
    const std::size_t plane = h * w;

    Shape out_shape = has_c ? Shape{c, 2 * h, 2 * w} : Shape{2 * h, 2 * w};
    Tensor out(std::move(out_shape));
    for (std::size_t ci = 0; ci < c; ++ci) {
        kernels::upsample2_nearest(in.data() + ci * plane, h, w, out.data() + ci * 4 * plane);
    }
    const int ii = input.id;
    return input.tape->record("upsample2", std::move(out), {ii},
                              [ii, c, h, w, plane](Tape& t, const Tensor& g) {
                                  Tensor gi(t.value_of(ii).shape());
                                  const std::size_t ow = 2 * w;
                                  for (std::size_t ci = 0; ci < c; ++ci) {
                                      const double* gp = g.data() + ci * 4 * plane;
                                      double* ip = gi.data() + ci * plane;
                                      for (std::size_t y = 0; y < h; ++y) {
                                          for (std::size_t x = 0; x < w; ++x) {
                                              ip[y * w + x] = gp[(2 * y) * ow + 2 * x] +
                                                              gp[(2 * y) * ow + 2 * x + 1] +
                                                              gp[(2 * y + 1) * ow + 2 * x] +
                                                              gp[(2 * y + 1) * ow + 2 * x + 1];
                                          }
                                      }
                                  }
                                  t.accumulate(ii, std::move(gi));
                              });
}

Var concat_channels(Var a, Var b) {
    check_same_tape(a, b, "concat_channels");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 3 || bv.rank() != 3 || av.extent(1) != bv.extent(1) ||
        av.extent(2) != bv.extent(2)) {
        throw ShapeError("concat_channels: expected {Ca,H,W} and {Cb,H,W}");
    }
    const std::size_t ca = av.extent(0), cb = bv.extent(0);
    Tensor out(Shape{ca + cb, av.extent(1), av.extent(2)});
    std::copy(av.values().begin(), av.values().end(), out.data());
    std::copy(bv.values().begin(), bv.values().end(), out.data() + av.numel());
    const int ia = a.id, ib = b.id;
    const std::size_t na = av.numel();
    return a.tape->record("concat_channels", std::move(out), {ia, ib},
                          [ia, ib, na](Tape& t, const Tensor& g) {
                              if (t.wants(ia)) {
                                  Tensor ga(t.value_of(ia).shape());
                                  std::copy(g.data(), g.data() + na, ga.data());
                                  t.accumulate(ia, std::move(ga));
                              }
                              if (t.wants(ib)) {
                                  Tensor gb(t.value_of(ib).shape());
                                  std::copy(g.data() + na, g.data() + g.numel(), gb.data());
                                  t.accumulate(ib, std::move(gb));
                              }
                          });
}

Var channel(Var input, std::size_t c) {
    const Tensor& in = input.value();
    if (in.rank() != 3) throw ShapeError("channel: expected {C,H,W}");
    if (c >= in.extent(0)) throw ShapeError("channel: index out of range");
    const std::size_t plane = in.extent(1) * in.extent(2);
    Tensor out(Shape{in.extent(1), in.extent(2)});
    std::copy(in.data() + c * plane, in.data() + (c + 1) * plane, out.data());
    const int ii = input.id;
    return input.tape->record("channel", std::move(out), {ii},
                              [ii, c, plane](Tape& t, const Tensor& g) {
                                  Tensor gi(t.value_of(ii).shape());
                                  std::copy(g.data(), g.data() + plane, gi.data() + c * plane);
                                  t.accumulate(ii, std::move(gi));
                              });
}

Var softmax_channels(Var logits) {
    const Tensor& z = logits.value();
    if (z.rank() != 3) throw ShapeError("softmax_channels: expected {C,H,W}");
    const std::size_t c = z.extent(0), plane = z.extent(1) * z.extent(2);
    Tensor out(z.shape());
    for (std::size_t p = 0; p < plane; ++p) {
        double m = z[p];
        for (std::size_t ci = 1; ci < c; ++ci) m = std::max(m, z[ci * plane + p]);
        double s = 0.0;
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double e = std::exp(z[ci * plane + p] - m);
            out[ci * plane + p] = e;
            s += e;
        }
        for (std::size_t ci = 0; ci < c; ++ci) out[ci * plane + p] /= s;
    }
    const int ii = logits.id;
    const int iv = static_cast<int>(logits.tape->size());
    return logits.tape->record("softmax_channels", std::move(out), {ii},
                               [ii, iv, c, plane](Tape& t, const Tensor& g) {
                                   const Tensor& p = t.value_of(iv);
                                   Tensor gi(p.shape());
                                   for (std::size_t px = 0; px < plane; ++px) {
                                       double dot = 0.0;
                                       for (std::size_t ci = 0; ci < c; ++ci) {
                                           dot += g[ci * plane + px] * p[ci * plane + px];
                                       }
                                       for (std::size_t ci = 0; ci < c; ++ci) {
                                           gi[ci * plane + px] =
                                               p[ci * plane + px] * (g[ci * plane + px] - dot);
                                       }
                                   }
                                   t.accumulate(ii, std::move(gi));
                               });
}

Var cross_entropy(Var probmap, const Tensor& labels) {
    const Tensor& p = probmap.value();
    if (p.rank() != 3) throw ShapeError("cross_entropy: expected {C,H,W} probabilities");
    if (labels.rank() != 2 || labels.extent(0) != p.extent(1) ||
        labels.extent(1) != p.extent(2)) {
        throw ShapeError("cross_entropy: label extents do not match probability map");
    }
    const std::size_t c = p.extent(0), plane = p.extent(1) * p.extent(2);
    std::vector<std::size_t> idx(plane);
    for (std::size_t px = 0; px < plane; ++px) {
        const double lv = labels[px];
        if (lv != std::floor(lv) || lv < 0.0 || lv >= static_cast<double>(c)) {
            throw Error("cross_entropy: label out of range [0," + std::to_string(c) + ")");
        }
        idx[px] = static_cast<std::size_t>(lv) * plane + px;
    }
    double loss = 0.0;
    for (std::size_t px = 0; px < plane; ++px) loss -= std::log(p[idx[px]]);
    loss /= static_cast<double>(plane);
    const int ii = probmap.id;
    return probmap.tape->record(
        "cross_entropy", Tensor::scalar(loss), {ii},
        [ii, idx = std::move(idx), plane](Tape& t, const Tensor& g) {
            const Tensor& p2 = t.value_of(ii);
            Tensor gi(p2.shape());
            const double s = -g[0] / static_cast<double>(plane);
            for (std::size_t px = 0; px < plane; ++px) gi[idx[px]] += s / p2[idx[px]];
            t.accumulate(ii, std::move(gi));
        });
}

Var grid_sample(Var input, Var coords) {
    check_same_tape(input, coords, "grid_sample");
    const Tensor& in = input.value();
    const Tensor& co = coords.value();
    const bool has_c = in.rank() == 3;
    if (!has_c && in.rank() != 2) throw ShapeError("grid_sample: expected {H,W} or {C,H,W}");
    const std::size_t c = has_c ? in.extent(0) : 1;
    const std::size_t h = in.extent(has_c ? 1 : 0), w = in.extent(has_c ? 2 : 1);
    if (co.rank() != 3 || co.extent(0) != h || co.extent(1) != w || co.extent(2) != 2) {
        throw ShapeError("grid_sample: coordinates must be {H,W,2} matching the input");
    }
    const std::size_t plane = h * w;
    Tensor out(in.shape());
    for (std::size_t ci = 0; ci < c; ++ci) {
        kernels::grid_sample_plane(in.data() + ci * plane, h, w, co.data(),
                                   out.data() + ci * plane);
    }
    const int ii = input.id, ic = coords.id;
    return input.tape->record(
        "grid_sample", std::move(out), {ii, ic}, [ii, ic, c, h, w, plane](Tape& t, const Tensor& g) {
            const Tensor& in2 = t.value_of(ii);
            const Tensor& co2 = t.value_of(ic);
            const bool want_in = t.wants(ii);
            const bool want_co = t.wants(ic);
            Tensor gi = want_in ? Tensor(in2.shape()) : Tensor();
            Tensor gc = want_co ? Tensor(co2.shape()) : Tensor();
            for (std::size_t ci = 0; ci < c; ++ci) {
                kernels::grid_sample_plane_grad(
                    g.data() + ci * plane, in2.data() + ci * plane, h, w, co2.data(),
                    want_in ? gi.data() + ci * plane : nullptr,
                    want_co ? gc.data() : nullptr);
            }
            if (want_in) t.accumulate(ii, std::move(gi));
            if (want_co) t.accumulate(ic, std::move(gc));
        });
}

std::pair<Var, Var> split_field(Var field) {
    const Tensor& f = field.value();
    if (f.rank() != 3 || f.extent(2) != 2) throw ShapeError("split_field: expected {H,W,2}");
    const std::size_t plane = f.extent(0) * f.extent(1);
    Tensor x(Shape{f.extent(0), f.extent(1)});
    Tensor y(Shape{f.extent(0), f.extent(1)});
    for (std::size_t p = 0; p < plane; ++p) {
        x[p] = f[2 * p];
        y[p] = f[2 * p + 1];
    }
    const int ii = field.id;
    auto make_back = [ii, plane](std::size_t comp) {
        return [ii, plane, comp](Tape& t, const Tensor& g) {
            Tensor gi(t.value_of(ii).shape());
            for (std::size_t p = 0; p < plane; ++p) gi[2 * p + comp] = g[p];
            t.accumulate(ii, std::move(gi));
        };
    };
    Var vx = field.tape->record("split_field_x", std::move(x), {ii}, make_back(0));
    Var vy = field.tape->record("split_field_y", std::move(y), {ii}, make_back(1));
    return {vx, vy};
}

Var stack_field(Var x, Var y) {
    check_same_tape(x, y, "stack_field");
    const Tensor& xv = x.value();
    const Tensor& yv = y.value();
    require_same_shape(xv, yv, "stack_field");
    if (xv.rank() != 2) throw ShapeError("stack_field: expected {H,W} planes");
    const std::size_t plane = xv.numel();
    Tensor out(Shape{xv.extent(0), xv.extent(1), 2});
    for (std::size_t p = 0; p < plane; ++p) {
        out[2 * p] = xv[p];
        out[2 * p + 1] = yv[p];
    }
    const int ix = x.id, iy = y.id;
    return x.tape->record("stack_field", std::move(out), {ix, iy},
                          [ix, iy, plane](Tape& t, const Tensor& g) {
                              if (t.wants(ix)) {
                                  Tensor gx(t.value_of(ix).shape());
                                  for (std::size_t p = 0; p < plane; ++p) gx[p] = g[2 * p];
                                  t.accumulate(ix, std::move(gx));
                              }
                              if (t.wants(iy)) {
                                  Tensor gy(t.value_of(iy).shape());
                                  for (std::size_t p = 0; p < plane; ++p) gy[p] = g[2 * p + 1];
                                  t.accumulate(iy, std::move(gy));
                              }
                          });
}

} // namespace advfield
