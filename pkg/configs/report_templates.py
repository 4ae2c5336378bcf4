"""
Report Templates
Jinja2 templates for the plain-text and markdown evaluation and ablation
reports. Numbers arrive pre-formatted as strings.
"""

EVAL_TEXT_TEMPLATE = """\
Evaluation report
Sampler: {{ plan }} | ensemble size: {{ ensemble_size }}{% if protocol_parity %} | ensemble matches the reference replicate count{% endif %}
{{ rule }}
{{ "%-15s %-9s %5s  %-22s %-22s"|format("Region", "Category", "Cases", "MSE_mu x1e-3", "MSE_sigma x1e-3") }}
{{ rule }}
{% for row in aggregates -%}
{{ "%-15s %-9s %5s  %-22s %-22s"|format(row.region, row.category, row.cases, row.mse_mu, row.mse_sigma) }}
{% endfor -%}
{{ rule }}

Per case
{{ rule }}
{{ "%-5s %-10s %-14s %-9s %-12s %-12s %-10s"|format("Case", "Re", "Region", "Category", "MSE_mu", "MSE_sigma", "s/sample") }}
{{ rule }}
{% for row in cases -%}
{{ "%-5s %-10s %-14s %-9s %-12s %-12s %-10s"|format(row.case_id, row.reynolds, row.region, row.category, row.mse_mu, row.mse_sigma, row.seconds) }}{% if row.degenerate %} (degenerate ensemble){% endif %}
{% endfor -%}
{{ rule }}
{% if timing %}Model evaluations: {{ timing.model_evaluations }} | wall time: {{ timing.wall_seconds }} s
{% endif %}"""

EVAL_MARKDOWN_TEMPLATE = """\
# Evaluation report

Sampler: `{{ plan }}`, ensemble size {{ ensemble_size }}{% if protocol_parity %} (matches the reference replicate count){% endif %}.

| Region | Category | Cases | MSE_mu x1e-3 | MSE_sigma x1e-3 |
|---|---|---:|---:|---:|
{% for row in aggregates -%}
| {{ row.region }} | {{ row.category }} | {{ row.cases }} | {{ row.mse_mu }} | {{ row.mse_sigma }} |
{% endfor %}
## Per case

| Case | Re | Region | Category | MSE_mu | MSE_sigma | s/sample |
|---:|---:|---|---|---:|---:|---:|
{% for row in cases -%}
| {{ row.case_id }} | {{ row.reynolds }} | {{ row.region }} | {{ row.category }} | {{ row.mse_mu }} | {{ row.mse_sigma }} | {{ row.seconds }} |
{% endfor %}
{% if timing %}Model evaluations: {{ timing.model_evaluations }}, wall time {{ timing.wall_seconds }} s.
{% endif %}"""

ABLATION_TEXT_TEMPLATE = """\
Ablation study{% if cases %} (cases {{ cases }}){% endif %}
{{ rule }}
{{ "%-42s %-12s %-10s %-12s %-10s %-12s %-10s %-8s"|format("Model variant", "MSE_mu", "Rel.", "MSE_sigma", "Rel.", "Inference s", "Rel.", "Evals") }}
{{ rule }}
{% for row in rows -%}
{{ "%-42s %-12s %-10s %-12s %-10s %-12s %-10s %-8s"|format(row.label, row.mse_mu, row.mse_mu_rel, row.mse_sigma, row.mse_sigma_rel, row.inference_seconds, row.inference_rel, row.evaluations_per_sample) }}
{% endfor -%}
{{ rule }}
"""

ABLATION_MARKDOWN_TEMPLATE = """\
# Ablation study
{% if cases %}
Cases: {{ cases }}
{% endif %}
| Model variant | MSE_mu | Rel. change | MSE_sigma | Rel. change | Inference time (s) | Rel. change | Model evaluations / sample |
|---|---:|---:|---:|---:|---:|---:|---:|
{% for row in rows -%}
| {{ row.label }} | {{ row.mse_mu }} | {{ row.mse_mu_rel }} | {{ row.mse_sigma }} | {{ row.mse_sigma_rel }} | {{ row.inference_seconds }} | {{ row.inference_rel }} | {{ row.evaluations_per_sample }} |
{% endfor %}"""
