#pragma once

#include <vector>

namespace cbrl {

/// What the bidder legitimately learns from one slot of auctions. Market prices appear only
/// for won auctions; a lost auction contributes its own bid, never the competing price.
struct SlotEvidence {
  double ratio = 0.0;
  std::vector<double> won_prices;
  std::vector<double> won_utilities;
  std::vector<double> lost_bids;
  std::vector<double> lost_utilities;

  bool empty() const { return won_prices.empty() && lost_bids.empty(); }
  bool consistent() const {
    return won_prices.size() == won_utilities.size() && lost_bids.size() == lost_utilities.size();
  }
};

}  // namespace cbrl
