#pragma once

#include <nlohmann/json.hpp>

#include "fusionkit/harness.hpp"

namespace fusionkit::harness {

/// Runs one core routine on caller-supplied inputs and returns its raw
/// outputs, so external checkers can compare them against their own
/// reference implementations. `request` is an object with an "op" field, or
/// an array of such objects (answered element by element). Settings not given
/// in the request come from `cfg`.
///
///   tokenize    {texts}                          -> {tokens}
///   assemble    {tweets: [{user_id,text,order,label}]}
///                                                -> {supertweets: [{user_id,label,window_index,tweet_count,token_count}]}
///   embed       {tokens, embeddings: {tok: vec}, dim, seed}
///                                                -> {values (D rows of T), real_token_count, average}
///   maxpool     {vector}                         -> {reduced}
///   svm         {x, y, seed, c?, gamma?, tol?, standardize?}
///                                                -> {alpha, dual_objective, kkt_violation, converged, bias, tol, gamma}
///   kmeans      {points, k, seed, restarts?}     -> {inertia, assignment, restart}
///   silhouette  {points, assignment}             -> {mean, per_point}
///   score_test  {tuples: [[n1,x1,n2,x2]]}        -> {results: [{z,p}]}
///   config      {}                               -> the effective config document
nlohmann::json run_probe(const Config& cfg, const nlohmann::json& request);

}  // namespace fusionkit::harness
