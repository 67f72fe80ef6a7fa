from __future__ import annotations

import pytest

from hyperfab.space import parse_space

MULTILAYER_DOC = """\
backbone_nums_block:
  type: int
  range: [2...5]
  submodule:
    block_type:
      type: choice
      range: {resnet, transformer}
      submodule:
        resnet:
          nums_layer:
            type: int
            range: [3...7]
            submodule:
              nums_channel:
                type: choice
                range: {64, 256}
        transformer:
          mlp_expend_ratio:
            type: choice
            range: {1, 2, 4, 8}
"""

DEPTH_CHANNELS_DOC = """\
depth:
  type: int
  range: [2...5]
  submodule:
    channels:
      type: choice
      range: {64, 256}
"""


@pytest.fixture
def multilayer_space():
    return parse_space(MULTILAYER_DOC, space_id="multilayer")


@pytest.fixture
def depth_channels_space():
    return parse_space(DEPTH_CHANNELS_DOC, space_id="depth-channels")
