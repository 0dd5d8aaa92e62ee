// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mteo/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace mteo {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

void Container::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : header)
        if (k == key) {
            v = value;
            return;
        }
    header.emplace_back(key, value);
}

bool Container::has(const std::string& key) const {
    for (const auto& [k, v] : header)
        if (k == key) return true;
    return false;
}

const std::string& Container::get(const std::string& key) const {
    for (const auto& [k, v] : header)
        if (k == key) return v;
    throw Error("container: missing header key '" + key + "'");
}

std::uint64_t Container::get_u64(const std::string& key) const {
    const std::string& s = get(key);
    std::uint64_t v = 0;
    const int base = s.starts_with("0x") ? 16 : 10;
    const char* begin = s.data() + (base == 16 ? 2 : 0);
    auto [p, ec] = std::from_chars(begin, s.data() + s.size(), v, base);
    if (ec != std::errc() || p != s.data() + s.size()) throw Error("container: header '" + key + "' is not an integer");
    return v;
}

double Container::get_f64(const std::string& key) const { return parse_double(get(key)); }

void Container::add(const std::string& name, Tensor t) {
    for (auto& [n, v] : tensors)
        if (n == name) throw Error("container: duplicate tensor '" + name + "'");
    tensors.emplace_back(name, std::move(t));
}

const Tensor& Container::tensor(const std::string& name) const {
    for (const auto& [n, v] : tensors)
        if (n == name) return v;
    throw Error("container: missing tensor '" + name + "'");
}

namespace {

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_str(std::string& out, std::string_view s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

class Reader {
public:
    explicit Reader(std::string_view b) : b_(b) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string str() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(b_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, b_.data() + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw Error("container: truncated data");
    }
    std::string_view b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_container(const Container& c) {
    std::string out(kContainerMagic, sizeof(kContainerMagic));
    put<std::uint32_t>(out, kContainerVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.header.size()));
    for (const auto& [k, v] : c.header) {
        put_str(out, k);
        put_str(out, v);
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
        put_str(out, name);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape()) put<std::uint64_t>(out, e);
        out.append(reinterpret_cast<const char*>(t.data().data()), t.numel() * sizeof(double));
    }
    return out;
}

Container decode_container(std::string_view bytes) {
    if (bytes.size() < sizeof(kContainerMagic) || std::memcmp(bytes.data(), kContainerMagic, sizeof(kContainerMagic)) != 0)
        throw Error("container: bad magic");
    Reader r(bytes.substr(sizeof(kContainerMagic)));
    const auto version = r.get<std::uint32_t>();
    if (version != kContainerVersion)
        throw Error("container: unsupported version " + std::to_string(version) + " (expected " +
                    std::to_string(kContainerVersion) + ")");
    Container c;
    const auto nh = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < nh; ++i) {
        std::string k = r.str();
        std::string v = r.str();
        c.header.emplace_back(std::move(k), std::move(v));
    }
    const auto nt = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < nt; ++i) {
        std::string name = r.str();
        const auto rank = r.get<std::uint32_t>();
        if (rank == 0 || rank > 8) throw Error("container: tensor '" + name + "' has invalid rank");
        Shape shape(rank);
        std::size_t numel = 1;
        for (auto& e : shape) {
            e = static_cast<std::size_t>(r.get<std::uint64_t>());
            if (e == 0 || e > (std::size_t{1} << 32)) throw Error("container: tensor '" + name + "' has invalid extent");
            numel *= e;
        }
        std::vector<double> data(numel);
        r.raw(data.data(), numel * sizeof(double));
        c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!r.done()) throw Error("container: trailing bytes");
    return c;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open '" + tmp + "' for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        f.flush();
        if (!f) throw Error("write to '" + tmp + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot rename '" + tmp + "' to '" + path.string() + "': " + ec.message());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("missing file: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_container(const std::filesystem::path& path, const Container& c) { write_file_atomic(path, encode_container(c)); }

Container read_container(const std::filesystem::path& path) {
    try {
        return decode_container(read_file(path));
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("format_double failed");
    return std::string(buf, p);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw Error("'" + s + "' is not a number");
    return v;
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

namespace {

void expect_kind(const Container& c, const std::string& kind) {
    const std::string& k = c.get("kind");
    if (k != kind) throw Error("container holds a '" + k + "', expected '" + kind + "'");
}

void put_schedule(Container& c, const Schedule& s, const std::string& prefix) {
    c.set(prefix + "kind", to_string(s.kind));
    c.set(prefix + "rho", format_double(s.rho));
    c.set(prefix + "sigma_min", format_double(s.sigma_min));
    c.set(prefix + "sigma_max", format_double(s.sigma_max));
    c.set(prefix + "fingerprint", hex64(s.fingerprint()));
    c.add(prefix + "times", Tensor({s.size()}, s.times));
}

Schedule get_schedule(const Container& c, const std::string& prefix) {
    Schedule s;
    s.kind = parse_schedule_kind(c.get(prefix + "kind"));
    s.rho = c.get_f64(prefix + "rho");
    s.sigma_min = c.get_f64(prefix + "sigma_min");
    s.sigma_max = c.get_f64(prefix + "sigma_max");
    s.times = c.tensor(prefix + "times").storage();
    validate(s);
    if (s.fingerprint() != c.get_u64(prefix + "fingerprint"))
        throw Error("schedule fingerprint mismatch: stored " + c.get(prefix + "fingerprint") + ", computed " +
                    hex64(s.fingerprint()));
    return s;
}

}  // namespace

Container to_container(const Denoiser& net) {
    Container c;
    const auto& cfg = net.config();
    c.set("kind", "checkpoint");
    c.set("data_dim", std::to_string(cfg.data_dim));
    c.set("n_blocks", std::to_string(cfg.n_blocks));
    c.set("hidden", std::to_string(cfg.hidden));
    c.set("embed_dim", std::to_string(cfg.embed_dim));
    c.set("n_fourier", std::to_string(cfg.n_fourier));
    c.set("sigma_data", format_double(cfg.sigma_data));
    c.set("fingerprint", hex64(net.digest()));
    for (const auto* p : net.parameters()) c.add(p->name, p->value);
    return c;
}

Denoiser denoiser_from(const Container& c) {
    expect_kind(c, "checkpoint");
    NetConfig cfg;
    cfg.data_dim = c.get_u64("data_dim");
    cfg.n_blocks = c.get_u64("n_blocks");
    cfg.hidden = c.get_u64("hidden");
    cfg.embed_dim = c.get_u64("embed_dim");
    cfg.n_fourier = c.get_u64("n_fourier");
    cfg.sigma_data = c.get_f64("sigma_data");
    cfg.validate();
    Denoiser net(cfg, 0);
    for (auto* p : net.parameters()) {
        const Tensor& t = c.tensor(p->name);
        if (t.shape() != p->value.shape())
            throw Error("checkpoint: tensor '" + p->name + "' has shape " + shape_str(t.shape()) + ", expected " +
                        shape_str(p->value.shape()));
        p->value = t;
    }
    if (net.digest() != c.get_u64("fingerprint"))
        throw Error("checkpoint fingerprint mismatch: stored " + c.get("fingerprint") + ", computed " + hex64(net.digest()));
    return net;
}

Container to_container(const EmbeddingBank& bank, const Schedule& schedule) {
    if (schedule.fingerprint() != bank.schedule_fingerprint)
        throw Error("bank: schedule fingerprint " + hex64(schedule.fingerprint()) + " does not match bank " +
                    hex64(bank.schedule_fingerprint));
    Container c;
    c.set("kind", "bank");
    c.set("variant", to_string(bank.variant));
    c.set("n_layers", std::to_string(bank.n_layers));
    c.set("embed_dim", std::to_string(bank.embed_dim));
    c.set("hidden", std::to_string(bank.hidden));
    c.set("n_steps", std::to_string(bank.n_steps()));
    c.set("backbone_fingerprint", hex64(bank.backbone_fingerprint));
    put_schedule(c, schedule, "schedule.");
    for (std::size_t i = 0; i < bank.n_steps(); ++i)
        for (std::size_t j = 0; j < bank.steps[i].size(); ++j) c.add(bank.steps[i][j].name, bank.steps[i][j].value);
    return c;
}

EmbeddingBank bank_from(const Container& c, Schedule* schedule) {
    expect_kind(c, "bank");
    EmbeddingBank bank;
    bank.variant = parse_bank_variant(c.get("variant"));
    bank.n_layers = c.get_u64("n_layers");
    bank.embed_dim = c.get_u64("embed_dim");
    bank.hidden = c.get_u64("hidden");
    bank.backbone_fingerprint = c.get_u64("backbone_fingerprint");
    const Schedule s = get_schedule(c, "schedule.");
    bank.schedule_fingerprint = s.fingerprint();
    const std::size_t n_steps = c.get_u64("n_steps");
    if (n_steps != s.intervals()) throw Error("bank: step count does not match its schedule");

    const std::size_t per_step = bank.variant == BankVariant::single ? 1
                                 : bank.variant == BankVariant::deep ? 2 * bank.n_layers
                                                                      : bank.n_layers;
    std::vector<const std::pair<std::string, Tensor>*> entries;
    for (const auto& e : c.tensors)
        if (!e.first.starts_with("schedule.")) entries.push_back(&e);
    if (entries.size() != n_steps * per_step)
        throw Error("bank: expected " + std::to_string(n_steps * per_step) + " tensors, found " +
                    std::to_string(entries.size()));
    const std::size_t width = bank.variant == BankVariant::deep ? bank.hidden : bank.embed_dim;
    bank.steps.resize(n_steps);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_steps; ++i)
        for (std::size_t j = 0; j < per_step; ++j, ++k) {
            const auto& [name, t] = *entries[k];
            if (t.shape() != Shape{1, width}) throw Error("bank: tensor '" + name + "' has shape " + shape_str(t.shape()));
            bank.steps[i].emplace_back(name, t);
        }
    if (schedule) *schedule = s;
    return bank;
}

Container to_container(const TeacherSet& set) {
    set.validate();
    Container c;
    c.set("kind", "teachers");
    c.set("k", std::to_string(set.k));
    c.set("solver", to_string(set.kind));
    c.set("seed_lo", std::to_string(set.seed_lo));
    c.set("seed_hi", std::to_string(set.seed_hi));
    c.set("global_seed", std::to_string(set.global_seed));
    c.set("backbone_fingerprint", hex64(set.backbone_fingerprint));
    put_schedule(c, set.student, "schedule.");
    const std::size_t n = set.student.size(), dim = set.dim();
    for (std::size_t r = 0; r < set.n_seeds(); ++r) {
        Tensor block({n, dim});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < dim; ++d) block.at(i, d) = set.states[i].at(r, d);
        c.add("seed." + std::to_string(set.seed_lo + r), std::move(block));
    }
    return c;
}

TeacherSet teachers_from(const Container& c) {
    expect_kind(c, "teachers");
    TeacherSet set;
    set.student = get_schedule(c, "schedule.");
    set.k = c.get_u64("k");
    set.kind = parse_solver_kind(c.get("solver"));
    set.seed_lo = c.get_u64("seed_lo");
    set.seed_hi = c.get_u64("seed_hi");
    set.global_seed = c.get_u64("global_seed");
    set.backbone_fingerprint = c.get_u64("backbone_fingerprint");
    if (set.seed_hi < set.seed_lo) throw Error("teachers: empty seed range");
    const std::size_t n = set.student.size();
    const Tensor& first = c.tensor("seed." + std::to_string(set.seed_lo));
    const std::size_t dim = first.cols();
    set.states.assign(n, Tensor({set.n_seeds(), dim}));
    for (std::size_t r = 0; r < set.n_seeds(); ++r) {
        const Tensor& block = c.tensor("seed." + std::to_string(set.seed_lo + r));
        if (block.shape() != Shape{n, dim})
            throw Error("teachers: seed block " + std::to_string(set.seed_lo + r) + " has shape " + shape_str(block.shape()));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < dim; ++d) set.states[i].at(r, d) = block.at(i, d);
    }
    set.validate();
    return set;
}

void save_denoiser(const std::filesystem::path& path, const Denoiser& net) { write_container(path, to_container(net)); }
Denoiser load_denoiser(const std::filesystem::path& path) { return denoiser_from(read_container(path)); }
void save_bank(const std::filesystem::path& path, const EmbeddingBank& bank, const Schedule& schedule) {
    write_container(path, to_container(bank, schedule));
}
EmbeddingBank load_bank(const std::filesystem::path& path, Schedule* schedule) { return bank_from(read_container(path), schedule); }
void save_teachers(const std::filesystem::path& path, const TeacherSet& set) { write_container(path, to_container(set)); }
TeacherSet load_teachers(const std::filesystem::path& path) { return teachers_from(read_container(path)); }

CsvWriter::CsvWriter(std::vector<std::string> columns) : n_cols_(columns.size()) {
    if (columns.empty()) throw Error("csv: need at least one column");
    row(columns);
    rows_ = 0;
}

CsvWriter& CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != n_cols_)
        throw Error("csv: row has " + std::to_string(cells.size()) + " cells, header has " + std::to_string(n_cols_));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].find_first_of(",\n\r\"") != std::string::npos) throw Error("csv: cell '" + cells[i] + "' needs quoting");
        if (i) text_ += ',';
        text_ += cells[i];
    }
    text_ += '\n';
    ++rows_;
    return *this;
}

void CsvWriter::save(const std::filesystem::path& path) const { write_file_atomic(path, text_); }

}  // namespace mteo
