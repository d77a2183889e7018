import hashlib
import json
import logging
import os

import numpy as np
import pandas as pd
import plotly.graph_objects as go
from prettytable import PrettyTable


def format_metadata(meta):
    """ Format a metadata mapping as the leading comment line of a CSV artifact. """
    return "# {}\n".format(';'.join("{}={}".format(key, meta[key]) for key in sorted(meta)))


def parse_metadata(line):
    """ Parse a leading comment line written by format_metadata. """
    meta = {}
    body = line.lstrip('#').strip()
    for item in filter(None, body.split(';')):
        key, _, value = item.partition('=')
        meta[key.strip()] = value.strip()
    return meta


def write_csv(path, frame, meta=None):
    """ Write a data frame as CSV, preceded by a metadata line.

    Floats are written with 17 significant digits so a read returns the same doubles.

    :param str path: Destination path.
    :param pandas.DataFrame frame: The table.
    :param dict meta: Metadata written to the first line.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', newline='') as f:
        if meta:
            f.write(format_metadata(meta))
        frame.to_csv(f, index=False, float_format='%.17g', lineterminator='\n')
    logging.debug("Wrote {} rows to {}".format(len(frame), path))


def read_csv(path, **kwargs):
    """ Read a CSV artifact, returning the frame and its metadata line (if any).

    :param str path: Source path.
    :return: (frame, metadata)
    :rtype: tuple
    """
    with open(path, 'r', newline='') as f:
        first = f.readline()
        if first.startswith('#'):
            meta = parse_metadata(first)
        else:
            meta = {}
            f.seek(0)
        dtype = kwargs.pop('dtype', {'district_id': str})
        frame = pd.read_csv(f, float_precision='round_trip', dtype=dtype, keep_default_na=False,
                            na_values=[''], **kwargs)
    return frame, meta


def write_json(path, payload):
    """ Write JSON deterministically (sorted keys, no timestamps). """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


def read_json(path):
    with open(path, 'r') as f:
        return json.load(f)


def sha256_file(path):
    """ SHA-256 of a file's bytes. """
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def render_table(field_names, rows, title=None):
    """ Render rows as an aligned text table.

    :param list field_names: Column headers.
    :param list rows: Row values, one list per row.
    :param str title: Optional table title.
    :rtype: str
    """
    table = PrettyTable()
    table.field_names = field_names
    table.align = 'l'
    for row in rows:
        table.add_row(row)
    if title:
        table.title = title
    return table.get_string()


def format_mean_sd(mean, sd, digits=4):
    return "{:.{d}f}±{:.{d}f}".format(mean, sd, d=digits)


def plot_heatmap(values, x_labels, y_labels, title, colorbar_title='P(urban)'):
    """ Make a heatmap figure of a per-tile raster; NaN cells are drawn as gaps. """
    fig = go.Figure(data=go.Heatmap(
        z=np.where(np.isfinite(values), values, None).tolist(),
        x=list(x_labels),
        y=list(y_labels),
        zmin=0.0,
        zmax=1.0,
        colorscale='YlOrRd',
        colorbar=dict(title=colorbar_title),
        hoverongaps=False
    ))
    fig.update_layout(
        title=title,
        xaxis=dict(title='tile x', constrain='domain'),
        yaxis=dict(title='tile y', autorange='reversed', scaleanchor='x'),
        plot_bgcolor='rgb(230, 230, 230)'
    )
    return fig


def plot_scatter_district_map(fig, data, latitude_key, longitude_key, value_key, label_key, size_offset=15):
    """ Make a scatterplot of district centroids sized by a (positive) value. """
    largest = max([entry[value_key] for entry in data]) if data else 1.0
    normalized_sizes = [(entry[value_key] / largest) * size_offset for entry in data]

    for index, entry in enumerate(data):
        fig.add_trace(go.Scattergeo(
            name="",
            lat=[entry[latitude_key]],
            lon=[entry[longitude_key]],
            text="{}: {:.4g}".format(entry[label_key], entry[value_key]),
            mode='markers',
            marker=dict(
                size=normalized_sizes[index],
                opacity=0.8,
                color='red',
                line=dict(width=0.3, color='black')
            ),
            showlegend=False
        ))
    fig.update_layout(
        geo=dict(
            scope='world',
            projection_type='mercator',
            fitbounds='locations',
            showland=True,
            landcolor='rgb(230, 230, 230)',
            showcountries=True,
            countrycolor='rgb(160, 160, 160)',
            showocean=True,
            oceancolor='rgb(200, 230, 255)',
            showlakes=False
        ),
        hoverlabel=dict(bgcolor='rgba(255,255,255,1)')
    )
    return fig


def write_figure(fig, path):
    """ Write a figure as standalone HTML (plotly.js embedded so the output is self-contained). """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.write_html(path, include_plotlyjs=True, full_html=True, div_id='read-pipeline-figure')
