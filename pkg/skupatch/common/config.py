"""
配置模块 - 统一配置管理

两类配置：

1. 运行时设置 RuntimeSettings（Pydantic Settings），支持 .env 文件和环境变量，
   前缀为 SKUPATCH_:
    - SKUPATCH_THREADS        评估/数据生成并行线程上限（0 = 按 CPU 核数）
    - SKUPATCH_LOG_LEVEL      日志级别
    - SKUPATCH_DEBUG_FINITE   开启张量 NaN/Inf 断言模式
    - SKUPATCH_DATA_DIR       默认输出目录

2. 实验配置 ExperimentConfig = ModelConfig + TrainConfig + DataConfig，
   从逐行 `key = value` 文本文件加载。键名在三个分组间唯一，未知键直接报错，
   避免拼写错误被静默忽略。

使用示例:
    >>> from skupatch.common.config import load_config, settings
    >>> cfg = load_config("configs/desk.conf").unwrap()
    >>> cfg.model.dim, cfg.train.learning_rate
    (64, 0.0001)
    >>> settings.threads

扩展指南:
    如需添加新配置项:
    1. 在对应分组的模型中添加字段
    2. 使用 Field(default=xxx) 设置默认值和验证
    3. 键名不得与其它分组重复
"""

import hashlib
from pathlib import Path
from typing import Any, Dict, Literal, Type

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .base import Result
from .errors import ConfigError


# 计算项目根目录
_CURRENT_DIR = Path(__file__).parent
_PROJECT_ROOT = _CURRENT_DIR.parent.parent
_ENV_FILE_PATH = _PROJECT_ROOT / ".env"


class RuntimeSettings(BaseSettings):
    """
    运行时设置

    与实验无关、只影响执行方式的开关。不会写入检查点。
    """

    threads: int = Field(
        default=0,
        ge=0,
        description="评估与数据生成的并行线程上限，0 表示按物理核数"
    )
    log_level: str = Field(
        default="INFO",
        description="日志级别"
    )
    debug_finite: bool = Field(
        default=False,
        description="张量 NaN/Inf 断言模式"
    )
    data_dir: str = Field(
        default="data",
        description="默认输出目录"
    )

    model_config = SettingsConfigDict(
        env_file=str(_ENV_FILE_PATH),
        env_prefix="SKUPATCH_",
        case_sensitive=False,
        extra="ignore",
        env_file_encoding="utf-8"
    )


class ModelConfig(BaseModel):
    """
    网络结构超参数

    默认值为桌面规模；K=200、L=4 的大规模设置同样可表达。
    """

    model_config = ConfigDict(extra="forbid")

    # ==================== 维度 ====================
    dim: int = Field(default=64, gt=0, description="token 宽度 d")
    layers: int = Field(default=3, ge=1, description="编码器层数 L（解码器每层级一层）")
    queries: int = Field(default=32, ge=1, description="目标查询数 K")
    heads: int = Field(default=4, ge=1, description="注意力头数 h")
    window: int = Field(default=4, ge=1, description="窗口自注意力的窗口边长")
    sampling_points: int = Field(default=4, ge=1, description="可变形注意力采样点数 D")
    ffn_hidden: int = Field(default=128, gt=0, description="前馈层隐藏宽度")
    head_layers: int = Field(default=4, ge=1, description="任务头 FFN 层数")

    # ==================== 几何 ====================
    image_size: int = Field(default=64, gt=0, description="输入图像边长 H=W")
    stride: int = Field(default=4, gt=0, description="图像分块步长 s")
    patch_size: int = Field(default=32, gt=0, description="补丁重采样边长 p")
    patch_stride: int = Field(default=4, gt=0, description="补丁分块步长 s_p")

    # ==================== UQR 掩码向量 ====================
    mask_grid: int = Field(default=32, gt=0, description="掩码重采样网格 m")
    mask_coeffs: int = Field(default=64, gt=0, description="保留的低频系数个数 n_c")

    # ==================== 消融开关 ====================
    use_fuse: bool = Field(default=True, description="金字塔特征融合（Fuse）")
    use_patch_cross: bool = Field(default=True, description="解码器补丁交叉注意力（Cross-A）")
    use_deformable: bool = Field(default=True, description="可变形注意力（Deformable-A），关闭时用稠密注意力")
    use_patch_guidance: bool = Field(default=True, description="编码器补丁→图像交叉注意力分支")
    use_window_attention: bool = Field(default=True, description="图像 token 使用窗口自注意力，关闭时为全局自注意力")
    deformable_logits: Literal["predicted", "dot"] = Field(default="predicted", description="可变形注意力权重来源")
    n_to_1_mode: Literal["attention", "add", "momentum"] = Field(default="attention", description="多补丁融合方式")
    n_to_1_momentum: float = Field(default=0.9, ge=0.0, le=1.0, description="momentum 融合系数")

    # ==================== 损失 ====================
    weight_class: float = Field(default=2.0, ge=0.0, description="λ_cls")
    weight_l1: float = Field(default=5.0, ge=0.0, description="λ_L1")
    weight_giou: float = Field(default=2.0, ge=0.0, description="λ_giou")
    weight_mask: float = Field(default=1.0, ge=0.0, description="λ_mask")
    no_object_weight: float = Field(default=0.1, gt=0.0, le=1.0, description="no-object 类别的交叉熵权重")
    smooth_l1_beta: float = Field(default=1.0, gt=0.0, description="Smooth-L1 转折点 β")
    aux_loss: bool = Field(default=False, description="逐解码层辅助损失")

    # ==================== 数值 ====================
    ln_eps: float = Field(default=1e-5, gt=0.0, description="LayerNorm ε")
    precision: Literal["float32", "float64"] = Field(default="float32", description="参数与激活精度")

    @model_validator(mode="after")
    def _check_geometry(self) -> "ModelConfig":
        if self.dim % self.heads:
            raise ValueError(f"dim={self.dim} 不能被 heads={self.heads} 整除")
        if self.image_size % self.stride:
            raise ValueError(f"image_size={self.image_size} 不能被 stride={self.stride} 整除")
        if self.patch_size % self.patch_stride:
            raise ValueError(f"patch_size={self.patch_size} 不能被 patch_stride={self.patch_stride} 整除")
        if self.mask_coeffs > self.mask_grid ** 2:
            raise ValueError(f"mask_coeffs={self.mask_coeffs} 超过 mask_grid²={self.mask_grid ** 2}")
        return self

    @property
    def token_grid(self) -> int:
        """第一层图像 token 网格边长 H/s"""
        return self.image_size // self.stride

    @property
    def patch_grid(self) -> int:
        """补丁 token 网格边长 p/s_p"""
        return self.patch_size // self.patch_stride


class TrainConfig(BaseModel):
    """训练超参数（AdamW 默认值取常见约定，学习率 1e-4）"""

    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=1e-4, ge=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    grad_clip: float = Field(default=1.0, ge=0.0, description="全局梯度范数裁剪，0 表示关闭")
    warmup_steps: int = Field(default=0, ge=0, description="线性预热步数")
    steps: int = Field(default=3000, ge=0)
    log_every: int = Field(default=10, ge=1)
    checkpoint_every: int = Field(default=500, ge=1)
    train_patches: int = Field(default=1, ge=1, le=10, description="每步最多使用的补丁数")
    negative_rate: float = Field(default=0.1, ge=0.0, le=1.0, description="以场景中不存在的 SKU 作为查询的概率")
    score_threshold: float = Field(default=0.5, ge=0.0, le=1.0, description="导出掩码/重叠指标的置信度阈值")


class DataConfig(BaseModel):
    """合成数据集参数"""

    model_config = ConfigDict(extra="forbid")

    num_seen: int = Field(default=20, ge=1, description="训练可见 SKU 数")
    num_unseen: int = Field(default=5, ge=1, description="留出的未见 SKU 数")
    train_scenes: int = Field(default=64, ge=0)
    test_scenes: int = Field(default=16, ge=0)
    scene_size: int = Field(default=64, gt=0)
    asset_size: int = Field(default=48, ge=8)
    patches_per_sku: int = Field(default=10, ge=1, le=10)
    hard_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    easy_min: int = Field(default=3, ge=1)
    easy_max: int = Field(default=6, ge=1)
    hard_min: int = Field(default=8, ge=1)
    hard_max: int = Field(default=15, ge=1)
    min_scale: float = Field(default=0.3, gt=0.0)
    max_scale: float = Field(default=0.55, gt=0.0)
    visibility_threshold: float = Field(default=0.25, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "DataConfig":
        if self.easy_min > self.easy_max or self.hard_min > self.hard_max:
            raise ValueError("实例数范围下界大于上界")
        if self.min_scale > self.max_scale:
            raise ValueError("min_scale 大于 max_scale")
        return self


class ExperimentConfig(BaseModel):
    """一次实验的全部配置"""

    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)


_SECTIONS: Dict[str, Type[BaseModel]] = {
    "model": ModelConfig,
    "train": TrainConfig,
    "data": DataConfig,
}


def _key_owner() -> Dict[str, str]:
    owner: Dict[str, str] = {}
    for section, model in _SECTIONS.items():
        for name in model.model_fields:
            owner[name] = section
    return owner


def parse_pairs(text: str) -> Dict[str, str]:
    """
    解析 `key = value` 文本

    Raises:
        ConfigError: 行格式错误或键重复
    """
    pairs: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"第 {lineno} 行缺少 '=': {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"第 {lineno} 行键或值为空: {raw!r}")
        if key in pairs:
            raise ConfigError(f"第 {lineno} 行键重复: {key}")
        pairs[key] = value
    return pairs


def build_config(pairs: Dict[str, str]) -> ExperimentConfig:
    """
    将扁平键值对分派到各分组并校验

    Raises:
        ConfigError: 未知键或值校验失败
    """
    owner = _key_owner()
    grouped: Dict[str, Dict[str, Any]] = {name: {} for name in _SECTIONS}
    for key, value in pairs.items():
        section = owner.get(key)
        if section is None:
            raise ConfigError(f"未知配置项: {key}")
        grouped[section][key] = value
    try:
        return ExperimentConfig(**{name: model(**grouped[name]) for name, model in _SECTIONS.items()})
    except ValidationError as e:
        raise ConfigError(f"配置校验失败: {e}") from e


def parse_config_text(text: str) -> Result[ExperimentConfig]:
    """从文本解析实验配置"""
    try:
        return Result.success(build_config(parse_pairs(text)))
    except ConfigError as e:
        return Result.fail(str(e))


def load_config(path: str | Path | None) -> Result[ExperimentConfig]:
    """
    加载配置文件，path 为 None 时返回默认配置

    Returns:
        Result[ExperimentConfig]: 失败时 error 描述原因
    """
    if path is None:
        return Result.success(ExperimentConfig())
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        return Result.fail(f"读取配置失败: {e}")
    return parse_config_text(text)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_section(model: BaseModel) -> str:
    """单个分组的规范文本形式（字段定义顺序）"""
    return "\n".join(
        f"{name} = {_format_value(getattr(model, name))}"
        for name in type(model).model_fields
    ) + "\n"


def format_config(cfg: ExperimentConfig) -> str:
    """完整实验配置的规范文本形式"""
    return "".join(format_section(getattr(cfg, name)) for name in _SECTIONS)


def parse_model_config(text: str) -> Result[ModelConfig]:
    """解析检查点中嵌入的 ModelConfig 文本块"""
    try:
        pairs = parse_pairs(text)
        return Result.success(ModelConfig(**pairs))
    except (ConfigError, ValidationError) as e:
        return Result.fail(f"检查点配置块非法: {e}")


def config_hash(cfg: BaseModel) -> str:
    """配置的 sha256 摘要（基于规范文本）"""
    text = format_config(cfg) if isinstance(cfg, ExperimentConfig) else format_section(cfg)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# 全局运行时设置实例
# 导入时自动加载 .env 文件和环境变量
settings = RuntimeSettings()
