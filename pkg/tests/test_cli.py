import json

import numpy as np
import pandas as pd
import pytest

from barsrate.cli import EXIT_BAD_INPUT, EXIT_FAILED, EXIT_OK, main
from barsrate.formats import ManifestEntry, write_manifest, write_tracks
from barsrate.signal_core import VideoRecord
from tests.helpers import make_track

FAST = ["--set", "grid_size=8", "--set", "inner_folds=3"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--patients", "4", "--seed", "5", "--raters", "3"]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def features_csv(synth_dir):
    out = synth_dir / "features.csv"
    assert main(["process", "--manifest", str(synth_dir / "manifest.csv"), "--out", str(out)]) == EXIT_OK
    return out


def flat_manifest(tmp_path):
    wrist = make_track("wrist", np.full(60, 5.0), np.zeros(60))
    head = make_track("head", np.zeros(60), np.zeros(60))
    record = VideoRecord("flat", "P900", "left", 1.0, wrist, head)
    write_tracks(record, tmp_path / "flat.csv")
    manifest = tmp_path / "manifest.csv"
    write_manifest([ManifestEntry("flat", "P900", "left", 1.0, 30.0, tmp_path / "flat.csv")], manifest)
    return manifest


class TestSynthAndProcess:
    """Тесты команд synth и process"""

    def test_synth_files(self, synth_dir):
        """Тест файлов синтетического набора"""
        manifest = pd.read_csv(synth_dir / "manifest.csv")
        assert len(manifest) == 8
        assert (synth_dir / "raters.csv").exists()
        assert (synth_dir / "tracks" / "P000_right_0.csv").exists()

    def test_features_and_empty_errors(self, synth_dir, features_csv):
        """Тест таблицы признаков и пустого файла ошибок по умолчанию"""
        assert len(pd.read_csv(features_csv)) == 8
        errors = pd.read_csv(synth_dir / "features.errors.csv")
        assert list(errors.columns) == ["video_id", "stage", "error", "message"]
        assert len(errors) == 0

    def test_dump_dir(self, synth_dir, tmp_path):
        """Тест выгрузки преобразований и сегментации"""
        dump = tmp_path / "dump"
        code = main(["process", "--manifest", str(synth_dir / "manifest.csv"),
                     "--out", str(tmp_path / "f.csv"), "--dump-dir", str(dump), "--jobs", "2"])
        assert code == EXIT_OK
        segmentation = json.loads((dump / "P000_right_0.segmentation.json").read_text())
        assert segmentation["designation"] in ("finger_nose_finger", "nose_finger_nose")
        assert all(c["start"] >= segmentation["start_frame"] for c in segmentation["cycles"])
        assert (dump / "P000_right_0.transforms.json").exists()

    def test_all_videos_failed(self, tmp_path):
        """Тест кода 1, когда ни одно видео не обработано"""
        errors = tmp_path / "errors.csv"
        code = main(["process", "--manifest", str(flat_manifest(tmp_path)),
                     "--out", str(tmp_path / "f.csv"), "--errors", str(errors)])
        assert code == EXIT_FAILED
        row = pd.read_csv(errors).iloc[0]
        assert (row["video_id"], row["stage"], row["error"]) == ("flat", "segment", "DegenerateRange")

    def test_missing_manifest(self, tmp_path):
        """Тест кода 2 для отсутствующего манифеста"""
        code = main(["process", "--manifest", str(tmp_path / "none.csv"), "--out", str(tmp_path / "f.csv")])
        assert code == EXIT_BAD_INPUT

    def test_bad_config(self, synth_dir, tmp_path):
        """Тест кода 2 для некорректного параметра"""
        code = main(["process", "--manifest", str(synth_dir / "manifest.csv"),
                     "--out", str(tmp_path / "f.csv"), "--set", "window=4"])
        assert code == EXIT_BAD_INPUT


class TestModelCommands:
    """Тесты команд train и predict"""

    def test_train_and_predict(self, features_csv, tmp_path):
        """Тест обучения и предсказания по сохраненной модели"""
        model = tmp_path / "model.json"
        predictions = tmp_path / "pred.csv"
        assert main(["train", "--features", str(features_csv), "--out", str(model), *FAST]) == EXIT_OK
        assert main(["predict", "--model", str(model), "--features", str(features_csv),
                     "--out", str(predictions)]) == EXIT_OK
        frame = pd.read_csv(predictions)
        assert len(frame) == 8
        assert frame["predicted_rounded"].isin(np.arange(0, 4.5, 0.5)).all()

    def test_model_mismatch(self, features_csv, tmp_path):
        """Тест кода 2 для модели с другим набором признаков"""
        model = tmp_path / "model.json"
        model.write_text(json.dumps({"feature_names": ["a"], "coef": [1.0]}))
        code = main(["predict", "--model", str(model), "--features", str(features_csv),
                     "--out", str(tmp_path / "p.csv")])
        assert code == EXIT_BAD_INPUT


class TestEvaluate:
    """Тесты команды evaluate"""

    def test_round_reproducible(self, synth_dir, features_csv, tmp_path):
        """Тест побайтно одинаковых отчетов при одном seed"""
        reports = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            code = main(["evaluate", "--features", str(features_csv), "--raters", str(synth_dir / "raters.csv"),
                         "--fullpoint", "round", "--repeats", "3", "--seed", "7", "--out", str(out), *FAST])
            assert code == EXIT_OK
            reports.append(out.read_bytes())
        assert reports[0] == reports[1]
        report = json.loads(reports[0])
        assert report["fullpoint"]["repeats"] == 3
        assert report["fullpoint"]["seed"] == 7

    def test_discard_reports_icc(self, features_csv, tmp_path):
        """Тест сводки Discard с ICC(2,1) при целых золотых оценках"""
        table = pd.read_csv(features_csv)
        table["gold_rating"] = np.floor(table["gold_rating"])
        integer_csv = tmp_path / "integer.csv"
        table.to_csv(integer_csv, index=False)
        out = tmp_path / "discard.json"
        code = main(["evaluate", "--features", str(integer_csv), "--fullpoint", "discard",
                     "--out", str(out), *FAST])
        assert code == EXIT_OK
        report = json.loads(out.read_text())
        assert report["fullpoint"]["mode"] == "discard"
        assert report["fullpoint"]["n_videos"] == report["n_videos"]
        assert report["fullpoint"]["mae_mean"] == report["mae"]
        assert report["fullpoint"]["icc_mean"] == report["icc"]
        assert report["fullpoint"]["icc_defined_repeats"] == int(report["icc_defined"])

    def test_from_manifest_with_exclusions(self, synth_dir, tmp_path):
        """Тест оценки по манифесту с исключенным видео в отчете"""
        manifest = pd.read_csv(synth_dir / "manifest.csv")
        broken = manifest.iloc[[0]].assign(video_id="broken", trajectory_path=str(tmp_path / "none.csv"))
        path = synth_dir / "manifest_broken.csv"
        pd.concat([manifest, broken]).to_csv(path, index=False)

        out = tmp_path / "report.json"
        assert main(["evaluate", "--manifest", str(path), "--out", str(out), *FAST]) == EXIT_OK
        report = json.loads(out.read_text())
        assert report["n_videos"] == 8
        assert [e["video_id"] for e in report["exclusions"]] == ["broken"]
