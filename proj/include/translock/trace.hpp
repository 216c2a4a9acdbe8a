#ifndef TRANSLOCK_TRACE_HPP
#define TRANSLOCK_TRACE_HPP

#include <string>
#include <vector>

namespace translock {

// Uniformly sampled record. samples are frequency offsets in Hz unless unit
// says otherwise (error-signal voltages use "V").
struct FrequencyTrace {
    std::string label;
    std::string unit = "Hz";
    double sample_interval = 0.0;  // s
    // True when each sample is the mean over its interval (no dead time),
    // false when the record is instantaneous samples.
    bool averaged_per_sample = false;
    std::vector<double> samples;

    std::size_t size() const { return samples.size(); }
    double duration() const { return sample_interval * static_cast<double>(samples.size()); }
};

// Throws InvalidModel on a non-positive interval or non-finite sample.
void validate(const FrequencyTrace& trace);

}  // namespace translock

#endif  // TRANSLOCK_TRACE_HPP
