#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vibraforge/protocol.hpp"

using namespace vibraforge;

namespace {

std::vector<std::uint8_t> data_of(const FrameSequence& f) {
    std::vector<std::uint8_t> out;
    for (auto b : f) out.push_back(b.data);
    return out;
}

// Independent parity: count bits by shifting.
bool parity_bit(std::uint8_t v) {
    int ones = 0;
    for (int i = 0; i < 8; ++i) ones += (v >> i) & 1;
    return ones % 2 == 1;
}

std::vector<VibrationCommand> all_commands() {
    std::vector<VibrationCommand> out;
    for (int a = 0; a <= kMaxAddress; ++a) {
        out.push_back(VibrationCommand::stop(a));
        for (int i = 0; i < kIntensityLevels; ++i)
            for (int f = 0; f < kFrequencyLevels; ++f)
                for (auto w : {WaveformSel::sine, WaveformSel::square})
                    out.push_back(VibrationCommand::start(a, i, f, w));
    }
    return out;
}

}  // namespace

TEST(Encode, KnownBytes) {
    EXPECT_EQ(data_of(encode(VibrationCommand::start(0, 7, 2))), (std::vector<std::uint8_t>{0x01, 0x74}));
    EXPECT_EQ(data_of(encode(VibrationCommand::stop(5))), (std::vector<std::uint8_t>{0x0A}));
    EXPECT_EQ(data_of(encode(VibrationCommand::start(127, 15, 7, WaveformSel::square))),
              (std::vector<std::uint8_t>{0xFF, 0xFF}));
}

TEST(Encode, ParityBitsAreEven) {
    for (const auto& c : all_commands()) {
        for (auto b : encode(c)) EXPECT_EQ(b.parity, parity_bit(b.data));
    }
}

TEST(Encode, RejectsOutOfRange) {
    EXPECT_THROW(encode(VibrationCommand::start(128, 0, 0)), RangeError);
    EXPECT_THROW(encode(VibrationCommand::start(0, 16, 0)), RangeError);
    EXPECT_THROW(encode(VibrationCommand::start(0, 0, 8)), RangeError);
    EXPECT_THROW(encode(VibrationCommand::stop(-1)), RangeError);
}

TEST(Encode, StopIsOneByteStartIsTwo) {
    EXPECT_EQ(encode(VibrationCommand::stop(9)).size(), 1u);
    EXPECT_EQ(encode(VibrationCommand::start(9, 1, 1)).size(), 2u);
}

TEST(Decode, KnownBytes) {
    const FrameSequence a{FrameByte::make(0x01), FrameByte::make(0x74)};
    EXPECT_EQ(decode(a), VibrationCommand::start(0, 7, 2));
    const FrameSequence b{FrameByte::make(0x0A)};
    EXPECT_EQ(decode(b), VibrationCommand::stop(5));
}

TEST(Decode, ParityAndTruncation) {
    const FrameSequence bad{FrameByte::make(0x01).with_bit_flipped(8), FrameByte::make(0x74)};
    EXPECT_THROW(decode(bad), ParityError);
    const FrameSequence cut{FrameByte::make(0x01)};
    EXPECT_THROW(decode(cut), TruncationError);
    EXPECT_THROW(decode(FrameSequence{}), TruncationError);
}

TEST(Decode, ExhaustiveRoundTrip) {
    const auto cmds = all_commands();
    ASSERT_EQ(cmds.size(), 128u * (1 + 16 * 8 * 2));
    for (const auto& c : cmds) ASSERT_EQ(decode(encode(c)), c);
}

TEST(Parity, EverySingleBitFlipIsDetected) {
    for (const auto& c : all_commands()) {
        for (auto b : encode(c)) {
            for (int bit = 0; bit <= 8; ++bit) ASSERT_FALSE(b.with_bit_flipped(bit).parity_ok());
        }
    }
}

TEST(Hop, Examples) {
    auto d = apply_hop(encode(VibrationCommand::start(3, 0, 0))[0]);
    ASSERT_FALSE(d.consumed());
    EXPECT_EQ(frame_address(d.forwarded), 2);
    EXPECT_TRUE(expects_second_byte(d.forwarded));
    EXPECT_TRUE(d.forwarded.parity_ok());

    EXPECT_TRUE(apply_hop(encode(VibrationCommand::stop(0))[0]).consumed());

    auto one = apply_hop(encode(VibrationCommand::stop(1))[0]);
    ASSERT_FALSE(one.consumed());
    EXPECT_TRUE(apply_hop(one.forwarded).consumed());
    EXPECT_FALSE(expects_second_byte(one.forwarded));
}

TEST(Hop, RejectsBadParity) {
    EXPECT_THROW(apply_hop(FrameByte::make(0x06).with_bit_flipped(2)), ParityError);
    EXPECT_THROW(expects_second_byte(FrameByte::make(0x06).with_bit_flipped(8)), ParityError);
}

TEST(Hop, SecondByteExpectation) {
    EXPECT_TRUE(expects_second_byte(encode(VibrationCommand::start(0, 1, 1))[0]));
    EXPECT_FALSE(expects_second_byte(encode(VibrationCommand::stop(9))[0]));
    EXPECT_TRUE(expects_second_byte(encode(VibrationCommand::start(9, 1, 1))[0]));
}

// Walking the hop rule down a chain lands on the same unit as indexing it.
TEST(Hop, WalkEqualsDirectIndexing) {
    for (int a = 0; a < 16; ++a) {
        for (auto act : {Action::start, Action::stop}) {
            VibrationCommand c = act == Action::start ? VibrationCommand::start(a, 3, 3) : VibrationCommand::stop(a);
            FrameByte b = encode(c)[0];
            int unit = 0;
            while (true) {
                auto d = apply_hop(b);
                if (d.consumed()) break;
                b = d.forwarded;
                ++unit;
                ASSERT_LT(unit, 16);
            }
            std::vector<int> chain(16);
            for (int i = 0; i < 16; ++i) chain[static_cast<std::size_t>(i)] = i;
            EXPECT_EQ(unit, chain[static_cast<std::size_t>(a)]);
        }
    }
}

TEST(Levels, DutyFractions) {
    EXPECT_DOUBLE_EQ(LevelTables::duty_fraction(7), 0.5);
    EXPECT_DOUBLE_EQ(LevelTables::duty_fraction(3), 0.25);
    EXPECT_DOUBLE_EQ(LevelTables::duty_fraction(15), 1.0);
    for (int k = 1; k < kIntensityLevels; ++k)
        EXPECT_GT(LevelTables::duty_fraction(k), LevelTables::duty_fraction(k - 1));
    EXPECT_THROW(LevelTables::duty_fraction(16), RangeError);
}

TEST(Levels, FrequencyRatios) {
    for (std::size_t i = 0; i + 1 < LevelTables::frequencies_hz.size(); ++i) {
        const double r = LevelTables::frequencies_hz[i + 1] / LevelTables::frequencies_hz[i];
        EXPECT_GE(r, 1.17) << i;
        EXPECT_LE(r, 1.19) << i;
    }
}

// Random byte pairs: decode either throws one of the codec errors or returns
// a command that re-encodes to the same bytes.
TEST(Decode, RandomBytesNeverMisdecode) {
    std::mt19937 rng(7);
    for (int i = 0; i < 20000; ++i) {
        const auto n = 1 + rng() % 2;
        FrameSequence f;
        for (unsigned j = 0; j < n; ++j) {
            FrameByte b{static_cast<std::uint8_t>(rng()), (rng() & 1) != 0};
            f.push_back(b);
        }
        try {
            const auto c = decode(f);
            EXPECT_EQ(encode(c), f);
        } catch (const ParityError&) {
        } catch (const TruncationError&) {
        } catch (const RangeError&) {
        }
    }
}
