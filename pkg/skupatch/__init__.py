"""
skupatch - 补丁引导的 SKU 实例分割

给定一张货架场景图像与目标 SKU 的 1..10 张参考补丁，
输出该 SKU 全部实例的掩码与检测框；训练时未见过的 SKU 无需微调。

目录结构:
    common/     - 基础设施: ServiceBase, Result, 配置, 协议, 异常
    autograd/   - numpy 反向模式自动微分
    nn/         - 参数模块、token 容器、注意力
    model/      - 分词器、相关性编码器、解码器、任务头、UQR 掩码编码
    matching/   - 匈牙利匹配、框工具、集合损失
    metrics/    - mAP、重叠 P/R/F、评估报告
    synth/      - 合成 SKU 与场景生成、数据集清单
    training/   - AdamW、检查点、训练 / 评估服务、自检
    cli/        - 命令行
    utils/      - 图像读写与重采样
"""

__version__ = "0.1.0"
