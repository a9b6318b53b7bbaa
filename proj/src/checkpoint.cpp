#include "dali/checkpoint.hpp"

#include <bit>
#include <map>

#include "dali/image.hpp"

namespace dali {

namespace {

struct Record {
    std::vector<std::uint32_t> dims;
    std::vector<double> data;
};

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

void put_record(std::string& out, const std::string& name, const std::vector<std::uint32_t>& dims,
                std::span<const double> data) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(dims.size()));
    for (auto d : dims) put_u32(out, d);
    for (double v : data) put_f64(out, v);
}

void put_scalar(std::string& out, const std::string& name, double v) { put_record(out, name, {1}, std::span(&v, 1)); }

class Cursor {
public:
    explicit Cursor(std::string_view b) : b_(b) {}
    bool done() const { return pos_ == b_.size(); }
    std::size_t pos() const { return pos_; }

    std::uint64_t uint(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= std::uint64_t(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw ParseError(pos_, "truncated checkpoint");
    }
    std::string_view b_;
    std::size_t pos_ = 0;
};

std::string layer_name(const char* who, std::size_t l, const char* what) {
    return std::string(who) + ".layer" + std::to_string(l) + "." + what;
}

void put_model(std::string& out, const char* who, const ModelParams& p) {
    for (std::size_t l = 0; l < p.layers(); ++l) {
        put_record(out, layer_name(who, l, "weight"), p.weight(l).shape, p.weight(l).data);
        put_record(out, layer_name(who, l, "bias"), p.bias(l).shape, p.bias(l).data);
    }
}

const Record& require(const std::map<std::string, Record>& recs, const std::string& name) {
    auto it = recs.find(name);
    if (it == recs.end()) throw ParseError(0, "checkpoint is missing record '" + name + "'");
    return it->second;
}

double scalar(const std::map<std::string, Record>& recs, const std::string& name) {
    const auto& r = require(recs, name);
    if (r.data.size() != 1) throw ParseError(0, "checkpoint record '" + name + "' is not a scalar");
    return r.data[0];
}

ModelParams read_model(const std::map<std::string, Record>& recs, const char* who, double slope) {
    ModelParams p;
    p.leaky_slope = slope;
    for (std::size_t l = 0; recs.count(layer_name(who, l, "weight")); ++l) {
        const auto& w = require(recs, layer_name(who, l, "weight"));
        const auto& b = require(recs, layer_name(who, l, "bias"));
        Tensor tw;
        tw.shape = w.dims;
        tw.data = w.data;
        Tensor tb;
        tb.shape = b.dims;
        tb.data = b.data;
        p.tensors.push_back(std::move(tw));
        p.tensors.push_back(std::move(tb));
        p.activations.push_back(Activation::leaky_relu);
    }
    if (p.activations.empty()) throw ParseError(0, std::string("checkpoint has no ") + who + " layers");
    p.activations.back() = Activation::identity;
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(0, std::string("checkpoint ") + who + ": " + e.what());
    }
    return p;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
    std::string out = "DCK1";
    put_u32(out, Checkpoint::kFormatVersion);
    put_model(out, "student", ck.student);
    put_model(out, "teacher", ck.teacher);
    put_record(out, "centers",
               {static_cast<std::uint32_t>(ck.centers.classes()), static_cast<std::uint32_t>(ck.centers.dim())},
               ck.centers.data());
    put_scalar(out, "optim.step", static_cast<double>(ck.optimizer.step));
    for (std::size_t i = 0; i < ck.optimizer.first.size(); ++i)
        put_record(out, "optim.first." + std::to_string(i),
                   {static_cast<std::uint32_t>(ck.optimizer.first[i].size())}, ck.optimizer.first[i]);
    for (std::size_t i = 0; i < ck.optimizer.second.size(); ++i)
        put_record(out, "optim.second." + std::to_string(i),
                   {static_cast<std::uint32_t>(ck.optimizer.second[i].size())}, ck.optimizer.second[i]);
    put_scalar(out, "meta.step", static_cast<double>(ck.step));
    put_scalar(out, "meta.epoch", static_cast<double>(ck.epoch));
    const double halves[2] = {static_cast<double>(ck.config_hash >> 32),
                              static_cast<double>(ck.config_hash & 0xFFFFFFFFu)};
    put_record(out, "meta.config_hash", {2}, halves);
    put_scalar(out, "meta.use_teacher", ck.use_teacher ? 1.0 : 0.0);
    put_scalar(out, "meta.leaky_slope", ck.student.leaky_slope);
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.substr(0, 4) != "DCK1") throw ParseError(0, "bad checkpoint magic (expected DCK1)");
    Cursor c(bytes);
    c.take(4);
    const auto version = static_cast<std::uint32_t>(c.uint(4));
    if (version == 0 || version > Checkpoint::kFormatVersion)
        throw ParseError(4, "unsupported checkpoint version " + std::to_string(version) + " (this build reads up to " +
                                std::to_string(Checkpoint::kFormatVersion) + ")");
    std::map<std::string, Record> recs;
    while (!c.done()) {
        const std::size_t start = c.pos();
        const auto len = static_cast<std::size_t>(c.uint(2));
        std::string name(c.take(len));
        Record r;
        const auto rank = static_cast<std::size_t>(c.uint(1));
        std::uint64_t count = 1;
        for (std::size_t i = 0; i < rank; ++i) {
            r.dims.push_back(static_cast<std::uint32_t>(c.uint(4)));
            count *= r.dims.back();
        }
        if (count > (bytes.size() - c.pos()) / 8) throw ParseError(c.pos(), "truncated checkpoint record '" + name + "'");
        r.data.resize(count);
        for (auto& v : r.data) v = std::bit_cast<double>(c.uint(8));
        if (!recs.emplace(std::move(name), std::move(r)).second) throw ParseError(start, "duplicate checkpoint record");
    }

    Checkpoint ck;
    const double slope = scalar(recs, "meta.leaky_slope");
    ck.student = read_model(recs, "student", slope);
    ck.teacher = read_model(recs, "teacher", slope);
    const auto& centers = require(recs, "centers");
    if (centers.dims.size() != 2) throw ParseError(0, "checkpoint centers must be rank 2");
    ck.centers = ClassCenters(centers.dims[0], centers.dims[1]);
    ck.centers.data() = centers.data;
    ck.optimizer.step = static_cast<std::int64_t>(scalar(recs, "optim.step"));
    for (std::size_t i = 0; recs.count("optim.first." + std::to_string(i)); ++i)
        ck.optimizer.first.push_back(recs.at("optim.first." + std::to_string(i)).data);
    for (std::size_t i = 0; recs.count("optim.second." + std::to_string(i)); ++i)
        ck.optimizer.second.push_back(recs.at("optim.second." + std::to_string(i)).data);
    ck.step = static_cast<std::int64_t>(scalar(recs, "meta.step"));
    ck.epoch = static_cast<int>(scalar(recs, "meta.epoch"));
    const auto& h = require(recs, "meta.config_hash");
    if (h.data.size() != 2) throw ParseError(0, "checkpoint config hash must have two halves");
    ck.config_hash = (static_cast<std::uint64_t>(h.data[0]) << 32) | static_cast<std::uint64_t>(h.data[1]);
    ck.use_teacher = scalar(recs, "meta.use_teacher") != 0.0;
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) { write_file(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace dali
