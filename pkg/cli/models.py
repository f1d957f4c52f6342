"""
命令行数据模型
"""

import configparser
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from config import SCHEME_CONFIG
from core.b2mapo_optimizer import SchemeConfig
from core.batch_scheduler import parse_batch_sequence
from core.exceptions import InputError
from core.game_core import (
    MarkovGame,
    build_dependency_chain_game,
    build_random_game,
    load_game,
)
from core.models import GroundTruthDependence, SchemeMode
from core.policies import (
    ObservationEncoder,
    StateObservationEncoder,
    WindowObservationEncoder,
)


def _split_list(value: Any) -> Any:
    """INI 中的列表写成逗号分隔"""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class GameSpec(BaseModel):
    """[game] 段：博弈文件或内置构造器"""

    model_config = ConfigDict(extra="forbid")

    file: Optional[str] = Field(None, description="博弈 JSON 文件，给定时忽略构造器参数")
    builder: Literal["chain", "random"] = Field("chain", description="内置构造器")
    n_agents: int = Field(3, ge=1, description="智能体数")
    n_states: int = Field(3, ge=1, description="状态数")
    n_actions: int = Field(2, ge=1, description="每个智能体的动作数")
    coupling: float = Field(0.5, ge=0.0, le=1.0, description="依赖链耦合强度")
    noise: float = Field(0.1, ge=0.0, le=1.0, description="转移噪声")
    observe: Literal["full", "masked"] = Field("full", description="观测模式")
    gamma: float = Field(SCHEME_CONFIG["gamma"], ge=0.0, lt=1.0, description="折扣因子")
    seed: int = Field(0, description="构造博弈用的种子")

    def build(
        self, base_dir: Optional[Path] = None
    ) -> Tuple[MarkovGame, Optional[GroundTruthDependence]]:
        """返回 (博弈, 真实依赖)；只有依赖链博弈带真实依赖"""
        if self.file:
            path = Path(self.file)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return load_game(path), None
        if self.builder == "chain":
            return build_dependency_chain_game(
                self.n_agents,
                self.coupling,
                self.seed,
                n_states=self.n_states,
                n_actions=self.n_actions,
                gamma=self.gamma,
                noise=self.noise,
                observe=self.observe,
            )
        return (
            build_random_game(
                self.n_agents, self.n_states, self.n_actions, self.gamma, self.seed
            ),
            None,
        )


class SchemeSpec(BaseModel):
    """[scheme] 段：未给出的字段取 SCHEME_CONFIG 默认值"""

    model_config = ConfigDict(extra="forbid")

    mode: SchemeMode = Field(SchemeMode.B2MAPO_DAG, description="更新方案")
    sequence: Optional[str] = Field(None, description="b2mapo-fixed 的批次序列，如 [{1},{2,3}]")
    clip_eps: Optional[List[float]] = Field(None, description="每个批次的裁剪参数")
    learning_rate: Optional[float] = Field(None, gt=0.0)
    epochs: Optional[int] = Field(None, ge=1)
    distill_period: Optional[int] = Field(None, ge=1)
    distill_coef: Optional[float] = Field(None, ge=0.0)
    distill_lr: Optional[float] = Field(None, gt=0.0)
    distill_steps: Optional[int] = Field(None, ge=0)
    lam: Optional[float] = Field(None, ge=0.0, le=1.0)
    n_episodes: Optional[int] = Field(None, ge=1)
    horizon: Optional[int] = Field(None, ge=1)
    normalize_advantages: Optional[bool] = None
    independent_update: Optional[bool] = None
    conditioned_critic: Optional[bool] = None
    parameter_sharing: Optional[bool] = None
    oracle_guard: Optional[bool] = None
    guard_backtracks: Optional[int] = Field(None, ge=0)

    @field_validator("clip_eps", mode="before")
    @classmethod
    def split_clip(cls, value: Any) -> Any:
        return _split_list(value)

    @model_validator(mode="after")
    def check_sequence(self) -> "SchemeSpec":
        if self.mode is SchemeMode.B2MAPO_FIXED and not self.sequence:
            raise ValueError("b2mapo-fixed 方案需要 sequence")
        return self

    def to_scheme_config(self, n_agents: int, oracle: bool) -> SchemeConfig:
        overrides: Dict[str, Any] = {
            name: value
            for name, value in self.model_dump(
                exclude={"mode", "sequence", "clip_eps"}
            ).items()
            if value is not None
        }
        if self.clip_eps:
            overrides["clip_eps"] = (
                self.clip_eps[0] if len(self.clip_eps) == 1 else tuple(self.clip_eps)
            )
        if self.sequence:
            overrides["fixed_sequence"] = parse_batch_sequence(self.sequence, n_agents)
        return SchemeConfig.from_defaults(mode=self.mode, oracle=oracle, **overrides)


class ExperimentSpec(BaseModel):
    """[experiment] 段"""

    model_config = ConfigDict(extra="forbid")

    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1, description="随机种子")
    rounds: int = Field(10, ge=1, description="训练轮数")
    oracle: bool = Field(False, description="是否使用精确优势并记录精确回报")
    output_dir: Optional[str] = Field(None, description="输出目录")
    init_scale: float = Field(0.0, ge=0.0, description="策略 logit 初始化尺度")
    encoder: Literal["state", "window"] = Field("state", description="观测编码")
    window: int = Field(4, ge=0, description="窗口编码的历史长度")
    n_buckets: int = Field(64, ge=1, description="窗口编码的桶数")

    @field_validator("seeds", mode="before")
    @classmethod
    def split_seeds(cls, value: Any) -> Any:
        return _split_list(value)

    @model_validator(mode="after")
    def check_oracle(self) -> "ExperimentSpec":
        if self.oracle and self.encoder != "state":
            raise ValueError("预言机模式只支持按状态编码的策略")
        return self

    def build_encoder(self) -> ObservationEncoder:
        if self.encoder == "window":
            return WindowObservationEncoder(self.window, self.n_buckets)
        return StateObservationEncoder()


class ExperimentConfig(BaseModel):
    """实验配置：[game] / [scheme] / [experiment] 三段"""

    model_config = ConfigDict(extra="forbid")

    game: GameSpec = Field(default_factory=GameSpec)
    scheme: SchemeSpec = Field(default_factory=SchemeSpec)
    experiment: ExperimentSpec = Field(default_factory=ExperimentSpec)

    @classmethod
    def from_ini(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """读取 INI 风格的 key = value 配置，未知段或字段都是输入错误"""
        path = Path(path)
        parser = configparser.ConfigParser(
            interpolation=None, inline_comment_prefixes=("#", ";")
        )
        try:
            with open(path, encoding="utf-8") as handle:
                parser.read_file(handle)
        except OSError as e:
            raise InputError(f"无法读取配置文件 {path}: {e}") from e
        except configparser.Error as e:
            raise InputError(f"配置文件格式错误 {path}: {e}") from e
        sections = {name: dict(parser.items(name)) for name in parser.sections()}
        return cls.from_sections(sections)

    @classmethod
    def from_sections(cls, sections: Dict[str, Dict[str, Any]]) -> "ExperimentConfig":
        try:
            return cls.model_validate(sections)
        except ValidationError as e:
            raise InputError(f"配置字段错误: {format_validation_error(e)}") from e


def format_validation_error(error: ValidationError) -> str:
    """把 pydantic 错误压成 `段.字段: 原因` 的一行"""
    parts = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


class ErrorResponse(BaseModel):
    """错误响应模型"""

    success: bool = Field(False, description="操作是否成功")
    error: str = Field(..., description="错误类型")
    message: str = Field(..., description="错误消息")
    details: Optional[Dict[str, Any]] = Field(None, description="错误详情")
