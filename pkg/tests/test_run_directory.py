import json
from datetime import datetime

from utils.run_directory import RESOLVED_CONFIG_NAME, create_run_directory, run_directory_name

NOW = datetime(2024, 3, 5, 14, 7, 9)


class TestRunDirectory:
    def test_name_format(self):
        assert run_directory_name("train", "0123456789", NOW) == "train-0123456789-20240305-140709"

    def test_resolved_config_is_stored(self, tmp_path):
        tree = {"seed": 3, "training": {"iterations": 5}}
        run_dir = create_run_directory(tmp_path, "evaluate", "abcdef0123", tree, NOW)
        assert run_dir.name == "evaluate-abcdef0123-20240305-140709"
        assert json.loads((run_dir / RESOLVED_CONFIG_NAME).read_text()) == tree

    def test_collisions_get_a_suffix(self, tmp_path):
        first = create_run_directory(tmp_path, "train", "abcdef0123", {}, NOW)
        second = create_run_directory(tmp_path, "train", "abcdef0123", {}, NOW)
        third = create_run_directory(tmp_path, "train", "abcdef0123", {}, NOW)
        assert second.name == first.name + "-1"
        assert third.name == first.name + "-2"
