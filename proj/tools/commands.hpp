#pragma once

#include <csignal>
#include <iomanip>
#include <iostream>

#include <gem/refine.hpp>
#include <gem/regressor.hpp>

#include "common.hpp"
#include "server.hpp"

namespace gemcli {

// ---------------------------------------------------------------------------
// synth

inline std::vector<OptionSpec> synthOptions() {
  const SynthSpec d;
  return {{"out", nullptr, "Output dataset directory"},
          {"seed", 1, "Seed for every random choice"},
          {"texResolution", d.texResolution, "UV texture resolution (square)"},
          {"frameCount", d.frameCount, "Number of frames"},
          {"cameraCount", d.cameraCount, "Number of cameras"},
          {"imageSize", d.imageSize, "Rendered image size (square)"},
          {"subdivisions", d.subdivisions, "Icosphere subdivisions of the face proxy"},
          {"shapes", 6, "Number of blend shapes"},
          {"amplitude", 0.12, "Weight of the first blend shape"},
          {"decay", 0.7, "Weight ratio between consecutive blend shapes"},
          {"vertexNoise", 0.0, "Per-frame vertex jitter (stddev)"},
          {"background", {0.0, 0.0, 0.0}, "Background color r,g,b"},
          {"featureDim", 2048, "Synthetic feature dimension"},
          {"featureNoise", 0.0, "Synthetic feature noise (stddev)"},
          {"threads", 0, "Worker threads (0 = hardware)"}};
}

inline int runSynth(const json& cfg, std::ostream& out) {
  const std::string dir = requiredStr(cfg, "out");
  SynthSpec s;
  s.seed = cfg["seed"].get<std::uint64_t>();
  s.texResolution = cfg["texResolution"];
  s.frameCount = cfg["frameCount"];
  s.cameraCount = cfg["cameraCount"];
  s.imageSize = cfg["imageSize"];
  s.subdivisions = cfg["subdivisions"];
  s.motion = defaultMotion(cfg["shapes"], cfg["amplitude"], cfg["decay"], s.seed);
  s.vertexNoise = cfg["vertexNoise"];
  s.background = vec3(cfg, "background");
  s.threads = cfg["threads"];
  const DatasetContents d = writeDataset(dir, s, cfg["featureDim"], cfg["featureNoise"]);
  out << "wrote " << d.sequence.clouds.size() << " frames, " << d.sequence.cameras.size() << " cameras, "
      << d.sequence.canonicalCloud.count() << " Gaussians to " << dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// distill

inline std::vector<OptionSpec> distillOptions() {
  return {{"clouds", nullptr, "Directory of per-frame .ply clouds", true},
          {"out", nullptr, "Output .gem path (suffixed _m<M> when several component counts are given)"},
          {"components", json::array({10}), "Components per modality; several values build several models"},
          {"layout", nullptr, "layout.json (default: next to the cloud directory, else a packed layout)"},
          {"cams", nullptr, "Camera directory for the PSNR report (default: next to the cloud directory)"},
          {"report", nullptr, "Write the report as JSON to this path"},
          {"colorFrame", -1, "Frame supplying the color texture (-1 = per-texel average)"},
          {"background", {0.0, 0.0, 0.0}, "Background for report renders (default: dataset spec)"},
          {"threads", 0, "Worker threads (0 = hardware)"}};
}

inline int runDistill(const json& cfg, std::ostream& out) {
  const std::string cloudDir = requiredStr(cfg, "clouds");
  requirePath(cloudDir, "cloud directory");
  if (!fs::is_directory(cloudDir)) throw UsageError("not a directory: " + cloudDir);
  const std::string outPath = requiredStr(cfg, "out");
  const auto counts = cfg["components"].get<std::vector<long long>>();
  if (counts.empty()) throw UsageError("components needs at least one value");
  const fs::path root = fs::path(cloudDir).lexically_normal().parent_path();

  const std::vector<GaussianCloud> clouds = loadClouds(cloudDir);
  if (clouds.empty()) throw InvalidInput("no .ply files in " + cloudDir);
  std::string layoutPath = str(cfg, "layout");
  if (layoutPath.empty() && fs::exists(root / "layout.json")) layoutPath = (root / "layout.json").string();
  const TexelLayout layout =
      layoutPath.empty() ? TexelLayout::packed(clouds.front().count()) : layoutFromJson(json::parse(readFile(layoutPath)));
  std::string camDir = str(cfg, "cams");
  if (camDir.empty() && fs::is_directory(root / "cams")) camDir = (root / "cams").string();
  const std::vector<Camera> cams = camDir.empty() ? std::vector<Camera>{} : loadCameras(camDir);
  const Eigen::Vector3d bg = datasetBackground(root, vec3(cfg, "background"));

  std::vector<ImageBuffer> reference;
  if (!cams.empty()) reference = renderGroundTruth(clouds, cams, bg);

  DistillOptions opts;
  opts.colorSource = cfg["colorFrame"].get<int>() < 0 ? kColorAverage : cfg["colorFrame"].get<int>();
  opts.threads = cfg["threads"];
  json report = json::array();
  out << std::setw(6) << "M" << std::setw(12) << "psnr" << "  file\n";
  for (long long m : counts) {
    if (m < 0) throw UsageError("component counts must be >= 0");
    const auto e = static_cast<Eigen::Index>(m);
    DistillReport dr;
    const GemModel model = distill(clouds, layout, {e, e, e, e}, opts, &dr);
    fs::path file = outPath;
    if (counts.size() > 1) file.replace_filename(file.stem().string() + "_m" + std::to_string(m) + file.extension().string());
    writeFile(file.string(), serialize(model));

    json entry = modelMeta(model);
    entry["file"] = file.string();
    for (Modality mod : kModalities) {
      entry["rankTruncated"][std::string(modalityName(mod))] = dr.rankTruncated[modalityIndex(mod)];
      entry["fittedComponents"][std::string(modalityName(mod))] = dr.fittedComponents[modalityIndex(mod)];
    }
    double psnrSum = 0.0;
    if (!cams.empty()) {
      for (std::size_t f = 0; f < clouds.size(); ++f) {
        const GaussianCloud recon = evaluate(model, project(model, clouds[f]));
        for (std::size_t c = 0; c < cams.size(); ++c)
          psnrSum += psnr(renderForward(recon, cams[c], bg).image, reference[f * cams.size() + c]);
      }
      entry["psnr"] = psnrSum / static_cast<double>(clouds.size() * cams.size());
    }
    out << std::setw(6) << m << std::setw(12);
    if (entry.contains("psnr")) out << std::fixed << std::setprecision(3) << entry["psnr"].get<double>();
    else out << "-";
    out << "  " << file.string() << "\n";
    for (Modality mod : kModalities) {
      const Eigen::VectorXd& s = model.basis(mod).stddev;
      if (s.size() > 0 && s.maxCoeff() == 0.0) out << "        " << modalityName(mod) << ": all stddev 0\n";
    }
    report.push_back(entry);
  }
  const std::string reportPath = str(cfg, "report");
  if (!reportPath.empty()) writeFile(reportPath, report.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// refine

inline std::vector<OptionSpec> refineOptions() {
  const RefineConfig d;
  return {{"model", nullptr, "Input .gem"},
          {"dataset", nullptr, "Dataset directory (clouds/, cams/, images/)"},
          {"out", nullptr, "Output .gem; a .json sidecar and .loss.csv are written next to it"},
          {"steps", 1000, "Optimization steps"},
          {"omega", d.omega, "D-SSIM weight"},
          {"lambda", d.lambda, "Position offset regularizer weight"},
          {"gamma", d.gamma, "Scale regularizer weight"},
          {"stepSize", d.stepSize, "Adam step size"},
          {"orthogonalizeEvery", d.orthogonalizeEvery, "Steps between QR passes"},
          {"batch", d.batch, "Views per step"},
          {"background", {0.0, 0.0, 0.0}, "Background color (default: dataset spec)"}};
}

// Every (frame, camera) view of a dataset, with coefficients projected from its clouds.
inline TrainingSet datasetTrainingSet(const GemModel& model, const fs::path& root, const Eigen::Vector3d& fallbackBg) {
  requirePath(root.string(), "dataset");
  const auto clouds = loadClouds(root / "clouds");
  const auto cams = loadCameras(root / "cams");
  TrainingSet set;
  set.background = datasetBackground(root, fallbackBg);
  for (const auto& c : clouds) set.coefficients.push_back(project(model, c));
  for (std::size_t f = 0; f < clouds.size(); ++f)
    for (std::size_t c = 0; c < cams.size(); ++c)
      set.views.push_back({f, cams[c],
                           decodePfm(readFile(datasetImagePath(root, static_cast<int>(f), static_cast<int>(c)).string()))});
  return set;
}

inline int runRefine(const json& cfg, std::ostream& out) {
  const GemModel model = loadModel(requiredStr(cfg, "model"));
  const std::string outPath = requiredStr(cfg, "out");
  const TrainingSet set = datasetTrainingSet(model, requiredStr(cfg, "dataset"), vec3(cfg, "background"));
  RefineConfig rc;
  rc.steps = cfg["steps"];
  rc.omega = cfg["omega"];
  rc.lambda = cfg["lambda"];
  rc.gamma = cfg["gamma"];
  rc.stepSize = cfg["stepSize"];
  rc.orthogonalizeEvery = cfg["orthogonalizeEvery"];
  rc.batch = cfg["batch"];
  const double before = trainingPsnr(model, set, set.coefficients);
  const RefineResult r = refineBases(model, set, rc);
  const double after = trainingPsnr(r.model, set, r.coefficients);
  writeFile(outPath, serialize(r.model));
  writeFile(outPath + ".loss.csv", lossHistoryCsv(r.history));
  json side;
  side["stepsCompleted"] = rc.steps;
  side["orthogonalizeEvery"] = rc.orthogonalizeEvery;
  side["basisMomentsResetAtCheckpoint"] = true;
  side["orthonormalOnExit"] = true;
  side["psnrBefore"] = before;
  side["psnrAfter"] = after;
  side["checkpoints"] = json::array();
  for (const auto& c : r.checkpoints)
    side["checkpoints"].push_back({{"step", c.step},
                                   {"psnrBefore", c.psnrBefore},
                                   {"psnrAfter", c.psnrAfter},
                                   {"orthErrorBefore", c.orthErrorBefore}});
  writeFile(outPath + ".json", side.dump(2) + "\n");
  out << "training PSNR " << std::fixed << std::setprecision(3) << before << " -> " << after << " dB over "
      << set.views.size() << " views\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit

inline std::vector<OptionSpec> fitOptions() {
  const FitConfig d;
  return {{"model", nullptr, "Input .gem"},
          {"dataset", nullptr, "Dataset directory supplying target views"},
          {"frame", 0, "Dataset frame to fit"},
          {"cameras", json::array(), "Dataset camera indices to use (empty = all)"},
          {"targets", json::array({""}), "Alternative to --dataset: image,camera.json pairs as image:camera"},
          {"init", nullptr, "Initial coefficients JSON (default: zeros)"},
          {"steps", d.steps, "Adam steps"},
          {"stepSize", d.stepSize, "Adam step size in stddev units"},
          {"omega", d.omega, "D-SSIM weight"},
          {"clampSigmas", d.clampSigmas, "Coefficient clamp in stddevs"},
          {"background", {0.0, 0.0, 0.0}, "Background color (default: dataset spec)"},
          {"out", nullptr, "Output coefficients JSON"}};
}

inline int runFit(const json& cfg, std::ostream& out) {
  const GemModel model = loadModel(requiredStr(cfg, "model"));
  const std::string outPath = requiredStr(cfg, "out");
  std::vector<FitTarget> targets;
  Eigen::Vector3d bg = vec3(cfg, "background");
  const std::string dataset = str(cfg, "dataset");
  if (!dataset.empty()) {
    requirePath(dataset, "dataset");
    bg = datasetBackground(dataset, bg);
    const auto cams = loadCameras(fs::path(dataset) / "cams");
    auto which = cfg["cameras"].get<std::vector<int>>();
    if (which.empty())
      for (std::size_t c = 0; c < cams.size(); ++c) which.push_back(static_cast<int>(c));
    const int frame = cfg["frame"];
    for (int c : which) {
      if (c < 0 || static_cast<std::size_t>(c) >= cams.size()) throw UsageError("camera index out of range");
      const fs::path img = datasetImagePath(dataset, frame, c);
      requirePath(img.string(), "target image");
      targets.push_back({cams[static_cast<std::size_t>(c)], decodePfm(readFile(img.string()))});
    }
  } else {
    for (const auto& pair : cfg["targets"].get<std::vector<std::string>>()) {
      if (pair.empty()) continue;
      const auto colon = pair.rfind(':');
      if (colon == std::string::npos) throw UsageError("targets entries look like image:camera.json");
      targets.push_back({loadCamera(pair.substr(colon + 1)), readImage(pair.substr(0, colon))});
    }
  }
  if (targets.empty()) throw UsageError("fit needs --dataset or --targets");
  FitConfig fc;
  fc.steps = cfg["steps"];
  fc.stepSize = cfg["stepSize"];
  fc.omega = cfg["omega"];
  fc.clampSigmas = cfg["clampSigmas"];
  const std::string init = str(cfg, "init");
  const CoefficientVector k0 = init.empty() ? model.zeroCoefficients() : loadCoefficients(init, model);
  const FitResult r = fitCoefficients(model, targets, k0, fc, bg);
  json result;
  result["coefficients"] = coefficientsToJson(r.coefficients);
  result["loss"] = r.loss;
  writeFile(outPath, result.dump(2) + "\n");
  if (!r.loss.empty())
    out << "loss " << std::scientific << std::setprecision(4) << r.loss.front() << " -> " << r.loss.back() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// render / traverse

inline std::vector<OptionSpec> renderOptions() {
  return {{"model", nullptr, "Input .gem (or use --cloud)"},
          {"cloud", nullptr, "Render a .ply cloud instead of a model"},
          {"coeffs", nullptr, "Coefficients JSON (default: zeros, the mean)"},
          {"camera", nullptr, "Camera JSON"},
          {"background", {0.0, 0.0, 0.0}, "Background color"},
          {"out", nullptr, "Output image (.png, .ppm or .pfm)"}};
}

inline int runRender(const json& cfg, std::ostream& out) {
  const Camera cam = loadCamera(requiredStr(cfg, "camera"));
  const std::string outPath = requiredStr(cfg, "out");
  const Eigen::Vector3d bg = vec3(cfg, "background");
  ImageBuffer img;
  if (!str(cfg, "cloud").empty()) {
    requirePath(str(cfg, "cloud"), "cloud");
    img = renderForward(decodePly(readFile(str(cfg, "cloud"))), cam, bg).image;
  } else {
    const GemModel model = loadModel(requiredStr(cfg, "model"));
    const std::string k = str(cfg, "coeffs");
    img = renderModel(model, k.empty() ? model.zeroCoefficients() : loadCoefficients(k, model), cam, bg);
  }
  writeImage(outPath, img);
  out << "wrote " << outPath << "\n";
  return 0;
}

inline std::vector<OptionSpec> traverseOptions() {
  return {{"model", nullptr, "Input .gem"},
          {"modality", "position", "position, rotation, scale or opacity"},
          {"component", 0, "Component index to sweep"},
          {"steps", 7, "Frames in the strip, sweeping -3 sigma to +3 sigma"},
          {"camera", nullptr, "Camera JSON"},
          {"background", {0.0, 0.0, 0.0}, "Background color"},
          {"out", nullptr, "Output contact sheet (.ppm, .png or .pfm)"}};
}

// Renders the sweep of one component; frames are returned left to right.
inline std::vector<ImageBuffer> traverseFrames(const GemModel& model, Modality m, Eigen::Index component, int steps,
                                               const Camera& cam, const Eigen::Vector3d& bg) {
  if (steps < 1) throw UsageError("steps must be >= 1");
  if (component < 0 || component >= model.basis(m).components())
    throw UsageError("component " + std::to_string(component) + " out of range for " + std::string(modalityName(m)));
  const double sigma = model.basis(m).stddev[component];
  std::vector<ImageBuffer> frames;
  for (int i = 0; i < steps; ++i) {
    CoefficientVector k = model.zeroCoefficients();
    k[m][component] = steps == 1 ? 0.0 : sigma * (-3.0 + 6.0 * i / (steps - 1));
    frames.push_back(renderModel(model, k, cam, bg));
  }
  return frames;
}

inline ImageBuffer contactSheet(const std::vector<ImageBuffer>& frames) {
  const int w = frames.front().width, h = frames.front().height;
  ImageBuffer sheet(w * static_cast<int>(frames.size()), h);
  for (std::size_t i = 0; i < frames.size(); ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) sheet.at(static_cast<int>(i) * w + x, y, c) = frames[i].at(x, y, c);
  return sheet;
}

inline int runTraverse(const json& cfg, std::ostream& out) {
  const GemModel model = loadModel(requiredStr(cfg, "model"));
  const Camera cam = loadCamera(requiredStr(cfg, "camera"));
  const std::string outPath = requiredStr(cfg, "out");
  Modality m;
  try {
    m = parseModality(str(cfg, "modality"));
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  const auto frames = traverseFrames(model, m, cfg["component"].get<Eigen::Index>(), cfg["steps"], cam, vec3(cfg, "background"));
  writeImage(outPath, contactSheet(frames));
  out << "wrote " << frames.size() << " frames to " << outPath << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// regressor

inline std::vector<OptionSpec> regressTrainOptions() {
  const RegressorTrainConfig d;
  return {{"features", nullptr, "Feature matrix file (N x featureDim)"},
          {"model", nullptr, "GEM whose stddevs bound the output"},
          {"dataset", nullptr, "Dataset whose clouds are projected for target coefficients"},
          {"coeffs", nullptr, "Alternative target coefficient matrix file (N x K)"},
          {"manifest", nullptr, "Pair manifest JSON (overrides --features/--coeffs)"},
          {"provenance", "fitted", "Provenance recorded for --coeffs targets"},
          {"neutral", 0, "Row of the neutral feature"},
          {"components", kFeatureComponents, "Feature PCA components"},
          {"steps", d.steps, "Adam steps"},
          {"learningRate", d.learningRate, "Adam step size"},
          {"seed", 1, "Initialization seed"},
          {"hidden", json::array({256, 256, 256}), "Hidden layer sizes"},
          {"out", nullptr, "Output regressor checkpoint"}};
}

inline int runRegressTrain(const json& cfg, std::ostream& out) {
  const GemModel model = loadModel(requiredStr(cfg, "model"));
  const std::string outPath = requiredStr(cfg, "out");
  PairManifest manifest;
  Eigen::MatrixXd features, coeffs;
  const std::string manifestPath = str(cfg, "manifest");
  if (!manifestPath.empty()) {
    requirePath(manifestPath, "manifest");
    manifest = pairManifestFromJson(json::parse(readFile(manifestPath)));
    const fs::path base = fs::path(manifestPath).parent_path();
    features = decodeMatrixFile(readFile((base / manifest.features).string()));
    coeffs = decodeMatrixFile(readFile((base / manifest.coefficients).string()));
  } else {
    const std::string featurePath = requiredStr(cfg, "features");
    requirePath(featurePath, "features");
    features = decodeMatrixFile(readFile(featurePath));
    manifest.features = fs::absolute(featurePath).string();
    manifest.neutralRow = cfg["neutral"];
    if (!str(cfg, "coeffs").empty()) {
      requirePath(str(cfg, "coeffs"), "coefficients");
      coeffs = decodeMatrixFile(readFile(str(cfg, "coeffs")));
      manifest.coefficients = fs::absolute(str(cfg, "coeffs")).string();
      manifest.provenance = str(cfg, "provenance");
    } else {
      const std::string dataset = requiredStr(cfg, "dataset");
      requirePath(dataset, "dataset");
      const auto clouds = loadClouds(fs::path(dataset) / "clouds");
      coeffs.resize(static_cast<Eigen::Index>(clouds.size()), model.zeroCoefficients().flatten().size());
      for (std::size_t f = 0; f < clouds.size(); ++f)
        coeffs.row(static_cast<Eigen::Index>(f)) = project(model, clouds[f]).flatten().transpose();
      manifest.coefficients = outPath + ".coeffs.bin";
      manifest.provenance = "projected";
      writeFile(manifest.coefficients, encodeMatrixFile(coeffs));
    }
    manifest.validate();
    for (Eigen::Index i = 0; i < std::min(features.rows(), coeffs.rows()); ++i)
      manifest.pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i)});
  }
  if (manifest.neutralRow >= features.rows()) throw InvalidInput("neutral row out of range");
  Eigen::MatrixXd pf(static_cast<Eigen::Index>(manifest.pairs.size()), features.cols());
  Eigen::MatrixXd pk(static_cast<Eigen::Index>(manifest.pairs.size()), coeffs.cols());
  for (std::size_t i = 0; i < manifest.pairs.size(); ++i) {
    const auto& p = manifest.pairs[i];
    if (p.featureRow >= features.rows() || p.coefficientRow >= coeffs.rows())
      throw InvalidInput("pair " + std::to_string(i) + " references a missing row");
    pf.row(static_cast<Eigen::Index>(i)) = features.row(p.featureRow);
    pk.row(static_cast<Eigen::Index>(i)) = coeffs.row(p.coefficientRow);
  }
  const FeaturePCA pca = buildFeaturePCA(features, manifest.neutralRow, cfg["components"].get<Eigen::Index>());
  RegressorTrainConfig rc;
  rc.steps = cfg["steps"];
  rc.learningRate = cfg["learningRate"];
  rc.seed = cfg["seed"].get<std::uint64_t>();
  rc.hidden = cfg["hidden"].get<std::vector<Eigen::Index>>();
  const RegressorTrainResult r = trainRegressor(pca, pf, pk, coefficientBounds(model), model.componentCounts(), rc);
  writeFile(outPath, serializeRegressor(r.model));
  writeFile(outPath + ".pairs.json", toJson(manifest).dump(2) + "\n");
  std::ostringstream curve;
  curve << "step,mse\n";
  for (std::size_t i = 0; i < r.loss.size(); ++i) curve << i << ',' << r.loss[i] << '\n';
  writeFile(outPath + ".loss.csv", curve.str());
  if (pca.rankWarning) out << "warning: feature PCA kept " << pca.components() << " of " << pca.requested << " components\n";
  if (r.clampedTargets) out << "warning: clamped " << r.clampedTargets << " targets to 0.999 * 3 sigma\n";
  out << "trained on " << manifest.pairs.size() << " pairs, final MSE " << std::scientific << std::setprecision(4)
      << (r.loss.empty() ? 0.0 : r.loss.back()) << "\n";
  return 0;
}

inline std::vector<OptionSpec> regressApplyOptions() {
  return {{"regressor", nullptr, "Regressor checkpoint"},
          {"features", nullptr, "Feature matrix file"},
          {"row", -1, "Single row to regress (-1 = all rows)"},
          {"out", nullptr, "Output: .json (coefficients) or .bin (matrix file, N x K)"}};
}

inline int runRegressApply(const json& cfg, std::ostream& out) {
  const std::string regPath = requiredStr(cfg, "regressor"), featPath = requiredStr(cfg, "features");
  requirePath(regPath, "regressor");
  requirePath(featPath, "features");
  const std::string outPath = requiredStr(cfg, "out");
  const RegressorModel model = deserializeRegressor(readFile(regPath));
  const Eigen::MatrixXd features = decodeMatrixFile(readFile(featPath));
  const int row = cfg["row"];
  if (row >= features.rows()) throw UsageError("row out of range");
  std::vector<Eigen::Index> rows;
  if (row >= 0) rows.push_back(row);
  else
    for (Eigen::Index i = 0; i < features.rows(); ++i) rows.push_back(i);
  Eigen::MatrixXd k(static_cast<Eigen::Index>(rows.size()), model.outputScale.size());
  json list = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const CoefficientVector c = regress(model, features.row(rows[i]).transpose());
    k.row(static_cast<Eigen::Index>(i)) = c.flatten().transpose();
    list.push_back(coefficientsToJson(c));
  }
  if (fs::path(outPath).extension() == ".bin") writeFile(outPath, encodeMatrixFile(k));
  else writeFile(outPath, (row >= 0 ? list.front() : list).dump(2) + "\n");
  out << "regressed " << rows.size() << " feature rows\n";
  return 0;
}

// ---------------------------------------------------------------------------
// metrics / info

inline std::vector<OptionSpec> metricsOptions() {
  return {{"a", nullptr, "First image (.pfm, .ppm or .png)", true},
          {"b", nullptr, "Second image", true},
          {"json", false, "Print a JSON report"}};
}

inline int runMetrics(const json& cfg, std::ostream& out) {
  const ImageBuffer a = readImage(requiredStr(cfg, "a")), b = readImage(requiredStr(cfg, "b"));
  const MetricReport r = metricReport(a, b);
  if (cfg["json"].get<bool>()) {
    out << json{{"psnr", r.psnr}, {"ssim", r.ssim}, {"l1", r.l1}}.dump() << "\n";
  } else {
    out << std::setprecision(10) << "psnr " << r.psnr << "\nssim " << r.ssim << "\nl1   " << r.l1 << "\n";
  }
  return 0;
}

inline std::vector<OptionSpec> infoOptions() {
  return {{"model", nullptr, "Input .gem", true}, {"json", false, "Print JSON"}};
}

inline int runInfo(const json& cfg, std::ostream& out) {
  const GemModel model = loadModel(requiredStr(cfg, "model"));
  const json meta = modelMeta(model);
  if (cfg["json"].get<bool>()) {
    json full = meta;
    for (Modality m : kModalities) {
      const Eigen::VectorXd& mean = model.basis(m).mean;
      full["mean"][std::string(modalityName(m))] = std::vector<double>(mean.data(), mean.data() + mean.size());
    }
    out << full.dump() << "\n";
    return 0;
  }
  out << "texture " << model.layout.texWidth << "x" << model.layout.texHeight << ", " << model.texels()
      << " active texels, " << meta["bytes"].get<std::uint64_t>() << " bytes\n";
  for (Modality m : kModalities) {
    const EigenBasis& b = model.basis(m);
    out << std::left << std::setw(9) << modalityName(m) << std::right << " M=" << b.components();
    if (b.components() > 0) out << "  stddev " << b.stddev.maxCoeff() << " .. " << b.stddev.minCoeff();
    out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// serve

inline std::vector<OptionSpec> serveOptions() {
  return {{"model", nullptr, "Model to serve (endpoints answer 404 without one)"},
          {"dataset", nullptr, "Dataset whose cameras /render can use"},
          {"static", nullptr, "Directory served at /"},
          {"host", "127.0.0.1", "Bind address"},
          {"port", 8080, "Port (0 = any free port)"},
          {"imageSize", 128, "Image size of the default camera when no dataset is given"},
          {"background", {0.0, 0.0, 0.0}, "Background color (default: dataset spec)"}};
}

inline ModelServer* activeServer = nullptr;

inline int runServe(const json& cfg, std::ostream& out) {
  std::optional<GemModel> model;
  if (!str(cfg, "model").empty()) model = loadModel(str(cfg, "model"));
  std::vector<Camera> cams;
  Eigen::Vector3d bg = vec3(cfg, "background");
  const std::string dataset = str(cfg, "dataset");
  if (!dataset.empty()) {
    requirePath(dataset, "dataset");
    cams = loadCameras(fs::path(dataset) / "cams");
    bg = datasetBackground(dataset, bg);
  }
  if (cams.empty()) cams = frontCameras(1, cfg["imageSize"]);
  const std::string staticDir = str(cfg, "static");
  if (!staticDir.empty()) requirePath(staticDir, "static directory");
  ModelServer server(std::move(model), cams, bg, staticDir);
  const std::string host = str(cfg, "host");
  const int port = cfg["port"];
  const int bound = port == 0 ? server.bindAnyPort(host) : (server.bind(host, port) ? port : -1);
  if (bound < 0) throw Error("serve: cannot bind " + host + ":" + std::to_string(port));
  out << "listening on http://" << host << ":" << bound << std::endl;
  activeServer = &server;
  std::signal(SIGINT, [](int) {
    if (activeServer) activeServer->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (activeServer) activeServer->stop();
  });
  server.listenAfterBind();
  activeServer = nullptr;
  return 0;
}

}  // namespace gemcli
