#include "fedgate/registry.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <curl/curl.h>
#include <fmt/format.h>

#include "fedgate/error.hpp"

#ifndef FEDGATE_SOURCE_DATA_DIR
#define FEDGATE_SOURCE_DATA_DIR ""
#endif

namespace fedgate {

namespace fs = std::filesystem;

const std::vector<DatasetEntry>& dataset_registry() {
    static const std::vector<DatasetEntry> entries = {
        {"iris", "iris.csv", "sepal width", "petal length", 150, 0xb9393124ace5a0b8ULL,
         "https://archive.ics.uci.edu/dataset/53/iris", "",
         "Vendored. Corrected copy (as shipped with scikit-learn); the raw UCI file differs in two rows."},
        {"socr-height-weight", "SOCR-HeightWeight.csv", "Height(Inches)", "Weight(Pounds)", 25000, std::nullopt,
         "http://socr.ucla.edu/docs/resources/SOCR_Data/SOCR_Data_Dinov_020_108_HeightsWeights.html",
         "http://socr.ucla.edu/docs/resources/SOCR_Data/SOCR_Data_Dinov_020_108_HeightsWeights.html",
         "25000 synthetic records of 18-year-olds, published as an HTML table."},
        {"heart-disease", "heart_statlog_cleveland_hungary_final.csv", "sex", "chest pain type", 1190, std::nullopt,
         "https://www.kaggle.com/datasets/mexwell/heart-disease-dataset", "",
         "Combined Statlog/Cleveland/Hungary/Switzerland/Long Beach file. Kaggle requires a login; download manually."},
    };
    return entries;
}

const DatasetEntry* find_dataset(const std::string& name) {
    for (const auto& e : dataset_registry()) {
        if (e.name == name || e.file_name == name) return &e;
    }
    return nullptr;
}

std::vector<fs::path> data_search_path() {
    std::vector<fs::path> dirs;
    if (const char* env = std::getenv("FEDGATE_DATA_DIR"); env && *env) dirs.emplace_back(env);
    dirs.emplace_back("data");
    if (std::strlen(FEDGATE_SOURCE_DATA_DIR) > 0) dirs.emplace_back(FEDGATE_SOURCE_DATA_DIR);
    return dirs;
}

std::optional<fs::path> locate(const DatasetEntry& entry) {
    for (const auto& dir : data_search_path()) {
        const auto p = dir / entry.file_name;
        std::error_code ec;
        if (fs::is_regular_file(p, ec)) return p;
    }
    return std::nullopt;
}

std::uint64_t column_checksum(const Dataset& dataset, const std::vector<std::string>& columns) {
    std::vector<std::size_t> idx;
    for (const auto& c : columns) idx.push_back(dataset.column_index(c));
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t r = 0; r < dataset.row_count(); ++r) {
        for (std::size_t c : idx) {
            const auto bits = std::bit_cast<std::uint64_t>(dataset.at(r, c));
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xffU;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

DatasetFingerprint fingerprint(const Dataset& dataset, const fs::path& path, const std::vector<std::string>& columns) {
    return {dataset.name(), path.generic_string(), dataset.row_count(), columns, column_checksum(dataset, columns)};
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

void verify(const DatasetEntry& entry, const DatasetFingerprint& fp) {
    if (fp.row_count != entry.row_count) {
        throw DataError(fmt::format("{}: expected {} rows for registry dataset '{}', found {}", fp.path,
                                    entry.row_count, entry.name, fp.row_count));
    }
    if (entry.checksum && fp.columns == std::vector<std::string>{entry.x_col, entry.y_col} &&
        fp.checksum != *entry.checksum) {
        throw DataError(fmt::format("{}: checksum {} does not match the pinned {} for '{}'", fp.path,
                                    hex64(fp.checksum), hex64(*entry.checksum), entry.name));
    }
}

ResolvedDataset resolve_dataset(const std::string& spec) {
    std::error_code ec;
    if (fs::is_regular_file(spec, ec)) {
        return {fs::path(spec), find_dataset(fs::path(spec).filename().string())};
    }
    const DatasetEntry* entry = find_dataset(spec);
    if (!entry) {
        throw DataError(fmt::format("'{}' is neither a readable file nor a known dataset name", spec));
    }
    if (auto p = locate(*entry)) return {*p, entry};
    std::vector<std::string> dirs;
    for (const auto& d : data_search_path()) dirs.push_back(d.string());
    throw DataError(fmt::format("dataset '{}' ({}) not found in: {}. Source: {}{}", entry->name, entry->file_name,
                                fmt::join(dirs, ", "), entry->source_url,
                                entry->fetch_url.empty() ? " (manual download)" : " (try `fedgate fetch`)"));
}

LoadedDataset load_dataset(const ResolvedDataset& resolved, const std::string& x_col, const std::string& y_col) {
    LoadedDataset out;
    const std::vector<std::string> cols = {x_col, y_col};
    out.data = load_csv(resolved.path, cols);
    if (resolved.entry) out.data = out.data.with_name(resolved.entry->name);
    out.fingerprint = fingerprint(out.data, resolved.path, cols);
    if (resolved.entry) verify(*resolved.entry, out.fingerprint);
    return out;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string decode_cell(const std::string& raw) {
    std::string text;
    bool in_tag = false;
    for (char c : raw) {
        if (c == '<') in_tag = true;
        else if (c == '>') in_tag = false;
        else if (!in_tag) text.push_back(c);
    }
    const std::pair<const char*, const char*> entities[] = {
        {"&nbsp;", " "}, {"&amp;", "&"}, {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}};
    for (const auto& [from, to] : entities) {
        for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos)) {
            text.replace(pos, std::strlen(from), to);
            pos += std::strlen(to);
        }
    }
    const auto b = text.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = text.find_last_not_of(" \t\r\n");
    return text.substr(b, e - b + 1);
}

// Splits the body of one <tr> into decoded cell texts.
std::vector<std::string> row_cells(const std::string& row, const std::string& row_lower) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
        const auto td = row_lower.find("<td", pos);
        const auto th = row_lower.find("<th", pos);
        const auto open = std::min(td, th);
        if (open == std::string::npos) break;
        const auto body = row_lower.find('>', open);
        if (body == std::string::npos) break;
        auto close = std::min(row_lower.find("</td", body), row_lower.find("</th", body));
        const auto next = std::min(row_lower.find("<td", body), row_lower.find("<th", body));
        close = std::min(close, next);
        cells.push_back(decode_cell(row.substr(body + 1, (close == std::string::npos ? row.size() : close) - body - 1)));
        if (close == std::string::npos) break;
        pos = close;
        if (pos == next) continue;
        pos += 4;
    }
    return cells;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q.push_back('"');
        q.push_back(c);
    }
    return q + "\"";
}

}  // namespace

std::string html_table_to_csv(const std::string& html, const std::vector<std::string>& required_header) {
    const std::string low = lower(html);
    std::size_t tpos = 0;
    while ((tpos = low.find("<table", tpos)) != std::string::npos) {
        auto tend = low.find("</table", tpos);
        if (tend == std::string::npos) tend = low.size();
        std::vector<std::vector<std::string>> rows;
        std::size_t rpos = tpos;
        while ((rpos = low.find("<tr", rpos)) != std::string::npos && rpos < tend) {
            auto rend = std::min(low.find("</tr", rpos + 3), low.find("<tr", rpos + 3));
            rend = std::min(rend, tend);
            auto cells = row_cells(html.substr(rpos, rend - rpos), low.substr(rpos, rend - rpos));
            if (!cells.empty()) rows.push_back(std::move(cells));
            rpos = rend;
        }
        auto header = std::find_if(rows.begin(), rows.end(), [&](const auto& r) {
            return std::all_of(required_header.begin(), required_header.end(),
                               [&](const auto& h) { return std::find(r.begin(), r.end(), h) != r.end(); });
        });
        if (header != rows.end()) {
            std::ostringstream out;
            const auto width = header->size();
            for (auto it = header; it != rows.end(); ++it) {
                if (it != header && it->size() != width) continue;
                for (std::size_t i = 0; i < it->size(); ++i) out << (i ? "," : "") << csv_field((*it)[i]);
                out << '\n';
            }
            return out.str();
        }
        tpos = tend;
    }
    throw DataError(fmt::format("no HTML table with header cells {}", fmt::join(required_header, ", ")));
}

namespace {

std::size_t append_body(char* data, std::size_t size, std::size_t n, void* user) {
    static_cast<std::string*>(user)->append(data, size * n);
    return size * n;
}

std::string http_get(const std::string& url) {
    CURL* curl = curl_easy_init();
    if (!curl) throw DataError("libcurl initialisation failed");
    std::string body;
    curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, append_body);
    curl_easy_setopt(curl, CURLOPT_WRITEDATA, &body);
    curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 20L);
    curl_easy_setopt(curl, CURLOPT_TIMEOUT, 300L);
    curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
    const CURLcode rc = curl_easy_perform(curl);
    curl_easy_cleanup(curl);
    if (rc != CURLE_OK) throw DataError(fmt::format("download of {} failed: {}", url, curl_easy_strerror(rc)));
    return body;
}

}  // namespace

fs::path fetch_dataset(const DatasetEntry& entry, const fs::path& dest_dir) {
    if (entry.fetch_url.empty()) {
        throw DataError(fmt::format("'{}' cannot be downloaded automatically. Get {} from {} and place it in {}",
                                    entry.name, entry.file_name, entry.source_url, dest_dir.string()));
    }
    std::string body = http_get(entry.fetch_url);
    if (lower(body.substr(0, 2048)).find("<html") != std::string::npos ||
        lower(body).find("<table") != std::string::npos) {
        body = html_table_to_csv(body, {entry.x_col, entry.y_col});
    }
    fs::create_directories(dest_dir);
    const fs::path tmp = dest_dir / (entry.file_name + ".part");
    {
        std::ofstream out(tmp, std::ios::binary);
        out << body;
        if (!out) throw DataError(fmt::format("cannot write {}", tmp.string()));
    }
    try {
        const auto loaded = load_dataset({tmp, nullptr}, entry.x_col, entry.y_col);
        verify(entry, loaded.fingerprint);
    } catch (...) {
        fs::remove(tmp);
        throw;
    }
    const fs::path dest = dest_dir / entry.file_name;
    fs::rename(tmp, dest);
    return dest;
}

}  // namespace fedgate
